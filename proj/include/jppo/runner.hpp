#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "jppo/agent.hpp"
#include "jppo/calibrate.hpp"
#include "jppo/checkpoint.hpp"
#include "jppo/config.hpp"
#include "jppo/metrics.hpp"
#include "jppo/oracle.hpp"

namespace jppo::runner {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kManifestSchema = "jppo.manifest.v1";

using Progress = std::function<void(const std::string&)>;

inline std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    std::string command;
    config::ExperimentConfig config;
    std::vector<std::uint64_t> seeds;
    std::int64_t episodes = 0;
    std::map<std::string, std::string> artifacts; // role -> file name relative to the manifest
    std::string tool_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
    double wall_seconds = 0.0;

    json to_json() const
    {
        return json{{"schema", kManifestSchema},
                    {"command", command},
                    {"tool_version", tool_version},
                    {"config", config::to_json(config)},
                    {"seeds", seeds},
                    {"episodes", episodes},
                    {"artifacts", artifacts},
                    {"started_at", started_at},
                    {"finished_at", finished_at},
                    {"wall_seconds", wall_seconds}};
    }

    static RunManifest from_json(const json& j)
    {
        if (!j.is_object() || j.value("schema", "") != kManifestSchema) {
            throw ConfigError("manifest: missing or unsupported schema");
        }
        RunManifest m;
        try {
            m.command = j.at("command");
            m.tool_version = j.at("tool_version");
            m.config = config::from_json(j.at("config"));
            m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
            m.episodes = j.at("episodes");
            m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
            m.started_at = j.value("started_at", "");
            m.finished_at = j.value("finished_at", "");
            m.wall_seconds = j.value("wall_seconds", 0.0);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("manifest: ") + e.what());
        }
        return m;
    }

    void write(const fs::path& dir) const
    {
        std::ofstream os(dir / "manifest.json", std::ios::trunc);
        if (!os) {
            throw std::runtime_error("cannot write manifest in " + dir.string());
        }
        os << to_json().dump(2) << '\n';
    }

    static RunManifest load(const fs::path& path)
    {
        std::ifstream is(path);
        if (!is) {
            throw ConfigError("cannot open manifest: " + path.string());
        }
        try {
            return from_json(json::parse(is));
        } catch (const json::parse_error& e) {
            throw ConfigError("manifest " + path.string() + ": " + e.what());
        }
    }
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()), started_at_(utc_now()) {}

    void stamp(RunManifest& m) const
    {
        m.started_at = started_at_;
        m.finished_at = utc_now();
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
    std::string started_at_;
};

inline void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

// ---- train

struct TrainOutput {
    RunManifest manifest;
    agent::TrainResult result;
};

inline TrainOutput train_run(const config::ExperimentConfig& cfg, std::uint64_t seed, std::int64_t episodes,
                             const fs::path& out_dir, const Progress& progress = {})
{
    cfg.validate();
    detail::require(episodes >= 1, "episodes must be >= 1");
    ensure_dir(out_dir);
    Stopwatch clock;
    TrainOutput out;
    out.manifest.command = "train";
    out.manifest.config = cfg;
    out.manifest.config.run.episodes = episodes;
    out.manifest.seeds = {seed};
    out.manifest.episodes = episodes;
    out.manifest.artifacts = {{"metrics", "metrics.jsonl"}, {"checkpoint", "checkpoint.bin"}, {"summary", "summary.json"}};

    std::ofstream metrics(out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) {
        throw std::runtime_error("cannot write metrics in " + out_dir.string());
    }
    env::JppoEnv environment(cfg.env);
    const std::int64_t report_every = std::max<std::int64_t>(1, episodes / 10);
    out.result = agent::train(environment, cfg.agent, episodes, seed, [&](const agent::EpisodeMetrics& m) {
        metrics::write_episode(metrics, m);
        if (progress && (m.episode + 1) % report_every == 0) {
            progress("episode " + std::to_string(m.episode + 1) + "/" + std::to_string(episodes) +
                     " reward " + std::to_string(m.total_reward) + " f " + std::to_string(m.mean_fidelity) +
                     " eps " + std::to_string(m.epsilon));
        }
    });
    metrics.close();
    if (!metrics) {
        throw std::runtime_error("failed writing metrics in " + out_dir.string());
    }
    agent::save_checkpoint((out_dir / "checkpoint.bin").string(), out.result.current);
    {
        std::ofstream os(out_dir / "summary.json", std::ios::trunc);
        os << metrics::summary_series(out.result.metrics, std::max<std::int64_t>(1, episodes / 100)).dump(2) << '\n';
    }
    clock.stamp(out.manifest);
    out.manifest.write(out_dir);
    return out;
}

/// Re-runs a train manifest into a new directory.
inline TrainOutput replay_train(const RunManifest& m, const fs::path& out_dir, const Progress& progress = {})
{
    if (m.command != "train" || m.seeds.size() != 1) {
        throw ConfigError("manifest does not describe a single-seed train run");
    }
    return train_run(m.config, m.seeds.front(), m.episodes, out_dir, progress);
}

// ---- oracle

inline oracle::PolicyTable oracle_table(const config::ExperimentConfig& cfg)
{
    return oracle::Oracle(cfg.env).optimal_policy(cfg.oracle);
}

inline oracle::PolicyTable oracle_run(const config::ExperimentConfig& cfg, const fs::path& out_dir)
{
    cfg.validate();
    ensure_dir(out_dir);
    Stopwatch clock;
    const auto table = oracle_table(cfg);
    {
        std::ofstream os(out_dir / "policy_table.txt", std::ios::trunc);
        if (!os) {
            throw std::runtime_error("cannot write policy table in " + out_dir.string());
        }
        table.write(os);
    }
    RunManifest m;
    m.command = "oracle";
    m.config = cfg;
    m.seeds = {cfg.oracle.seed};
    m.artifacts = {{"policy_table", "policy_table.txt"}};
    clock.stamp(m);
    m.write(out_dir);
    return table;
}

inline oracle::PolicyTable load_policy_table(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open policy table: " + path.string());
    }
    return oracle::PolicyTable::read(is);
}

// ---- eval

inline constexpr const char* kEvalSchema = "jppo.eval.v1";

struct EvalSummary {
    oracle::RolloutStats policy;
    oracle::RolloutStats oracle;
    double table_expected_optimum = 0.0;
    double table_mean_fidelity = 0.0;
    double table_mean_power_w = 0.0;
    double action_agreement = 0.0;
    std::int64_t episodes = 0;
    std::uint64_t seed = 0;

    /// Greedy mean reward over the table's expected optimum.
    double optimality_ratio() const
    {
        return table_expected_optimum > 0.0 ? policy.mean_reward / table_expected_optimum : 0.0;
    }
    double power_distance_w() const { return std::abs(policy.mean_power_w - oracle.mean_power_w); }
    bool power_in_reference_band() const { return policy.mean_power_w >= 4.0 && policy.mean_power_w <= 5.0; }

    json to_json() const
    {
        auto stats = [](const oracle::RolloutStats& s) {
            return json{{"steps", s.steps},
                        {"mean_reward", s.mean_reward},
                        {"mean_fidelity", s.mean_fidelity},
                        {"mean_ber", s.mean_ber},
                        {"mean_power_w", s.mean_power_w},
                        {"mean_kappa", s.mean_kappa},
                        {"mean_latency_s", s.mean_latency_s},
                        {"baseline_latency_s", s.baseline_latency_s},
                        {"latency_improvement", s.latency_improvement()},
                        {"violation_rate", s.violation_rate},
                        {"violations", metrics::violations_json(s.violations)}};
        };
        return json{{"schema", kEvalSchema},
                    {"episodes", episodes},
                    {"seed", seed},
                    {"policy", stats(policy)},
                    {"oracle_rollout", stats(oracle)},
                    {"table_expected_optimum", table_expected_optimum},
                    {"table_mean_fidelity", table_mean_fidelity},
                    {"table_mean_power_w", table_mean_power_w},
                    {"optimality_ratio", optimality_ratio()},
                    {"regret", oracle.mean_reward - policy.mean_reward},
                    {"action_agreement", action_agreement},
                    {"power_distance_w", power_distance_w()},
                    {"power_in_4_5_w_band", power_in_reference_band()}};
    }
};

inline EvalSummary evaluate(const oracle::Policy& policy, const config::ExperimentConfig& cfg,
                            const oracle::PolicyTable& table, std::int64_t episodes, std::uint64_t seed)
{
    const auto r = oracle::regret(policy, table, cfg.env, episodes, seed);
    EvalSummary s;
    s.policy = r.policy;
    s.oracle = r.oracle;
    s.table_expected_optimum = r.table_expected_optimum;
    s.table_mean_fidelity = table.mean_fidelity();
    s.table_mean_power_w = table.mean_power_w();
    s.action_agreement = r.action_agreement;
    s.episodes = episodes;
    s.seed = seed;
    return s;
}

template <typename Scalar>
oracle::Policy greedy_policy(const agent::QNetwork<Scalar>& net)
{
    detail::require(net.input_dim() == static_cast<int>(env::kStateDim) && net.output_dim() == service::kNumActions,
                    "checkpoint shape does not match the environment (3 inputs, 50 actions)");
    return [&net](const env::StateVec& s) { return agent::argmax(agent::q_forward(net, s)); };
}

inline EvalSummary eval_checkpoint(const fs::path& checkpoint, const config::ExperimentConfig& cfg,
                                   const std::optional<oracle::PolicyTable>& table, std::int64_t episodes,
                                   std::uint64_t seed)
{
    cfg.validate();
    const auto net = agent::load_checkpoint<agent::PolicyScalar>(checkpoint.string());
    const auto policy = greedy_policy(net);
    const auto t = table ? *table : oracle_table(cfg);
    return evaluate(policy, cfg, t, episodes, seed);
}

// ---- calibrate

inline json calibration_json(const calibrate::CalibrationResult& r, const std::vector<calibrate::TimingRow>& rows)
{
    json points = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        points.push_back({{"tokens", rows[i].tokens},
                          {"kappa", rows[i].kappa},
                          {"observed_s", rows[i].seconds},
                          {"predicted_s", r.predicted[i]},
                          {"residual_s", r.residuals[i]}});
    }
    json imps = json::array();
    for (const auto& c : r.improvements) {
        imps.push_back({{"tokens", c.tokens}, {"kappa", c.kappa}, {"observed", c.observed}, {"modeled", c.modeled}});
    }
    return json{{"schema", "jppo.calibration.v1"},
                {"compute",
                 {{"slm_time_per_token_s", r.profile.slm_time_per_token_s},
                  {"llm_time_per_token_s", r.profile.llm_time_per_token_s},
                  {"llm_fixed_overhead_s", r.profile.llm_fixed_overhead_s},
                  {"output_tokens", r.profile.output_tokens}}},
                {"points", points},
                {"rms_residual_s", r.rms_residual_s},
                {"improvements", imps},
                {"observed_mean_improvement", r.observed_mean_improvement},
                {"modeled_mean_improvement", r.modeled_mean_improvement}};
}

inline calibrate::CalibrationResult calibrate_file(const fs::path& timings, std::vector<calibrate::TimingRow>* rows_out = nullptr)
{
    std::ifstream is(timings);
    if (!is) {
        throw ConfigError("cannot open timings file: " + timings.string());
    }
    auto rows = calibrate::read_timings(is);
    auto r = calibrate::fit(rows);
    if (rows_out) {
        *rows_out = std::move(rows);
    }
    return r;
}

// ---- sweep

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs)
{
    MeanStd r;
    if (xs.empty()) {
        return r;
    }
    for (double x : xs) {
        r.mean += x;
    }
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) {
            ss += (x - r.mean) * (x - r.mean);
        }
        r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return r;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvalSummary eval;
    double train_seconds = 0.0;
};

struct SweepReport {
    std::vector<SeedOutcome> seeds;
    std::map<std::string, MeanStd> aggregate;

    std::vector<std::uint64_t> failed() const
    {
        std::vector<std::uint64_t> f;
        for (const auto& s : seeds) {
            if (!s.ok) {
                f.push_back(s.seed);
            }
        }
        return f;
    }

    json to_json() const
    {
        json per = json::array();
        for (const auto& s : seeds) {
            json row{{"seed", s.seed}, {"ok", s.ok}, {"train_seconds", s.train_seconds}};
            if (s.ok) {
                row["eval"] = s.eval.to_json();
            } else {
                row["error"] = s.error;
            }
            per.push_back(row);
        }
        json agg = json::object();
        for (const auto& [k, v] : aggregate) {
            agg[k] = {{"mean", v.mean}, {"stddev", v.stddev}};
        }
        return json{{"schema", "jppo.sweep.v1"}, {"seeds", per}, {"aggregate", agg}, {"failed_seeds", failed()}};
    }
};

inline std::map<std::string, double> eval_scalars(const EvalSummary& e)
{
    return {{"mean_reward", e.policy.mean_reward},
            {"mean_fidelity", e.policy.mean_fidelity},
            {"mean_ber", e.policy.mean_ber},
            {"mean_power_w", e.policy.mean_power_w},
            {"mean_kappa", e.policy.mean_kappa},
            {"mean_latency_s", e.policy.mean_latency_s},
            {"latency_improvement", e.policy.latency_improvement()},
            {"violation_rate", e.policy.violation_rate},
            {"optimality_ratio", e.optimality_ratio()},
            {"regret", e.oracle.mean_reward - e.policy.mean_reward},
            {"action_agreement", e.action_agreement},
            {"power_distance_w", e.power_distance_w()}};
}

inline SweepReport aggregate(std::vector<SeedOutcome> outcomes)
{
    SweepReport r;
    r.seeds = std::move(outcomes);
    std::map<std::string, std::vector<double>> cols;
    for (const auto& s : r.seeds) {
        if (s.ok) {
            for (const auto& [k, v] : eval_scalars(s.eval)) {
                cols[k].push_back(v);
            }
        }
    }
    for (const auto& [k, v] : cols) {
        r.aggregate[k] = mean_std(v);
    }
    return r;
}

/// Train + eval for each seed on a bounded pool; each worker owns its env,
/// agent and RNG. One seed's failure does not stop the others.
inline SweepReport sweep_run(const config::ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                             const fs::path& out_dir, unsigned workers = 1, const Progress& progress = {})
{
    cfg.validate();
    detail::require(!seeds.empty(), "sweep needs at least one seed");
    ensure_dir(out_dir);
    Stopwatch clock;
    const auto table = oracle_run(cfg, out_dir / "oracle");
    std::vector<SeedOutcome> outcomes(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto work = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            auto& o = outcomes[i];
            o.seed = seeds[i];
            try {
                const auto dir = out_dir / ("seed_" + std::to_string(o.seed));
                const auto t0 = std::chrono::steady_clock::now();
                const auto tr = train_run(cfg, o.seed, cfg.run.episodes, dir);
                o.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                const auto policy = greedy_policy(tr.result.current);
                o.eval = evaluate(policy, cfg, table, cfg.run.eval_episodes, cfg.run.eval_seed);
                std::ofstream(dir / "eval.json", std::ios::trunc) << o.eval.to_json().dump(2) << '\n';
                o.ok = true;
            } catch (const std::exception& e) {
                o.error = e.what();
            }
            if (progress) {
                std::lock_guard lock(log_mu);
                progress("seed " + std::to_string(o.seed) + (o.ok ? " done" : " failed: " + o.error));
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds.size())));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < n; ++k) {
            pool.emplace_back(work);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    auto report = aggregate(std::move(outcomes));
    std::ofstream(out_dir / "sweep.json", std::ios::trunc) << report.to_json().dump(2) << '\n';
    RunManifest m;
    m.command = "sweep";
    m.config = cfg;
    m.seeds = seeds;
    m.episodes = cfg.run.episodes;
    m.artifacts = {{"report", "sweep.json"}, {"policy_table", "oracle/policy_table.txt"}};
    for (auto s : seeds) {
        m.artifacts["run_" + std::to_string(s)] = "seed_" + std::to_string(s) + "/manifest.json";
    }
    clock.stamp(m);
    m.write(out_dir);
    return report;
}

} // namespace jppo::runner
