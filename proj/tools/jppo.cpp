#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "jppo/jppo.hpp"

namespace fs = std::filesystem;
using namespace jppo;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string env_or(const char* name, const std::string& fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("jppo");
    logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
    spdlog::set_default_logger(logger);
    const auto level = spdlog::level::from_str(env_or("JPPO_LOG_LEVEL", "info"));
    spdlog::set_level(level);
}

config::ExperimentConfig load_config(const std::string& path)
{
    if (path.empty()) {
        return {};
    }
    return config::load(path);
}

void progress(const std::string& msg) { spdlog::info("{}", msg); }

} // namespace

int main(int argc, char** argv)
{
    setup_logging();
    CLI::App app{"Joint prompt compression and transmit power optimization"};
    app.require_subcommand(1);
    app.set_version_flag("--version", runner::kToolVersion);
    const std::string default_out = env_or("JPPO_OUT_DIR", "runs");

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    std::int64_t episodes = 0;

    auto* train = app.add_subcommand("train", "train a Double DQN agent");
    std::string manifest_path;
    train->add_option("--config", config_path, "config file (JSON)")->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "master seed");
    train->add_option("--episodes", episodes, "episodes (default: run.episodes from config)");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--manifest", manifest_path, "re-run the train manifest at this path")
        ->check(CLI::ExistingFile)
        ->excludes("--config");

    auto* eval = app.add_subcommand("eval", "greedy rollout of a checkpoint against the oracle table");
    std::string checkpoint;
    std::string table_path;
    std::uint64_t eval_seed = 0;
    eval->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);
    eval->add_option("--config", config_path, "config file (JSON)")->check(CLI::ExistingFile);
    eval->add_option("--oracle", table_path, "policy table written by oracle (computed when omitted)")
        ->check(CLI::ExistingFile);
    eval->add_option("--episodes", episodes, "eval episodes (default: run.eval_episodes)");
    eval->add_option("--seed", eval_seed, "eval seed (default: run.eval_seed)");
    eval->add_option("--out", out_dir, "directory for eval.jsonl");

    auto* orc = app.add_subcommand("oracle", "exhaustive per-bin optimal policy");
    std::size_t bins = 0;
    std::size_t samples = 0;
    orc->add_option("--config", config_path, "config file (JSON)")->check(CLI::ExistingFile);
    orc->add_option("--bins", bins, "SNR bins (default: oracle.bins)")->check(CLI::PositiveNumber);
    orc->add_option("--samples", samples, "Monte Carlo samples per bin")->check(CLI::PositiveNumber);
    orc->add_option("--out", out_dir, "output directory");

    auto* cal = app.add_subcommand("calibrate", "fit the compute profile to measured timings");
    std::string timings;
    cal->add_option("--timings", timings, "CSV with tokens,kappa,seconds")->required()->check(CLI::ExistingFile);
    cal->add_option("--out", out_dir, "directory for calibration.json");

    auto* sweep = app.add_subcommand("sweep", "train + eval over seeds 1..K");
    std::uint64_t num_seeds = 1;
    unsigned workers = 1;
    sweep->add_option("--config", config_path, "config file (JSON)")->check(CLI::ExistingFile);
    sweep->add_option("--seeds", num_seeds, "number of seeds K")->check(CLI::PositiveNumber);
    sweep->add_option("--workers", workers, "concurrent seeds")->check(CLI::PositiveNumber);
    sweep->add_option("--episodes", episodes, "episodes per seed (default: run.episodes)");
    sweep->add_option("--out", out_dir, "output directory");

    auto* props_cmd = app.add_subcommand("props", "property and mutation checks");
    std::string golden_dir;
    std::string report_path;
    std::uint64_t props_seed = 20240101;
    props_cmd->add_option("--golden", golden_dir, "directory of golden case files")->check(CLI::ExistingDirectory);
    props_cmd->add_option("--seed", props_seed, "master seed");
    props_cmd->add_option("--json", report_path, "write the machine-readable report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train) {
            const fs::path out = out_dir.empty() ? fs::path(default_out) / "train" : fs::path(out_dir);
            runner::TrainOutput result;
            if (!manifest_path.empty()) {
                const auto m = runner::RunManifest::load(manifest_path);
                spdlog::info("replaying {} into {}", manifest_path, out.string());
                result = runner::replay_train(m, out, progress);
            } else {
                const auto cfg = load_config(config_path);
                const auto n = episodes > 0 ? episodes : cfg.run.episodes;
                spdlog::info("training {} episodes, seed {}, into {}", n, seed, out.string());
                result = runner::train_run(cfg, seed, n, out, progress);
            }
            const auto& last = result.result.metrics.back();
            std::cout << nlohmann::json{{"out", out.string()},
                                        {"episodes", result.manifest.episodes},
                                        {"final_epsilon", last.epsilon},
                                        {"wall_seconds", result.manifest.wall_seconds}}
                             .dump(2)
                      << '\n';
        } else if (*eval) {
            const auto cfg = load_config(config_path);
            std::optional<oracle::PolicyTable> table;
            if (!table_path.empty()) {
                table = runner::load_policy_table(table_path);
            } else {
                spdlog::info("no --oracle table given; computing one from the config");
            }
            const auto n = episodes > 0 ? episodes : cfg.run.eval_episodes;
            const auto s = eval->count("--seed") ? eval_seed : cfg.run.eval_seed;
            const auto summary = runner::eval_checkpoint(checkpoint, cfg, table, n, s);
            if (!summary.power_in_reference_band()) {
                spdlog::warn("mean transmit power {:.3f} W lies outside the 4-5 W reference band",
                             summary.policy.mean_power_w);
            }
            const auto j = summary.to_json();
            if (!out_dir.empty()) {
                runner::ensure_dir(out_dir);
                std::ofstream(fs::path(out_dir) / "eval.jsonl", std::ios::app) << j.dump() << '\n';
            }
            std::cout << j.dump(2) << '\n';
        } else if (*orc) {
            auto cfg = load_config(config_path);
            if (bins > 0) {
                cfg.oracle.count = bins;
            }
            if (samples > 0) {
                cfg.oracle.mc_samples = samples;
            }
            const fs::path out = out_dir.empty() ? fs::path(default_out) / "oracle" : fs::path(out_dir);
            const auto table = runner::oracle_run(cfg, out);
            spdlog::info("wrote {} bins to {}", table.bins.size(), (out / "policy_table.txt").string());
            table.write(std::cout);
        } else if (*cal) {
            std::vector<calibrate::TimingRow> rows;
            const auto r = runner::calibrate_file(timings, &rows);
            const auto j = runner::calibration_json(r, rows);
            if (!out_dir.empty()) {
                runner::ensure_dir(out_dir);
                std::ofstream(fs::path(out_dir) / "calibration.json", std::ios::trunc) << j.dump(2) << '\n';
            }
            std::cout << j.dump(2) << '\n';
        } else if (*sweep) {
            auto cfg = load_config(config_path);
            if (episodes > 0) {
                cfg.run.episodes = episodes;
            }
            std::vector<std::uint64_t> seeds;
            for (std::uint64_t k = 1; k <= num_seeds; ++k) {
                seeds.push_back(k);
            }
            const fs::path out = out_dir.empty() ? fs::path(default_out) / "sweep" : fs::path(out_dir);
            const auto report = runner::sweep_run(cfg, seeds, out, workers, progress);
            std::cout << report.to_json().at("aggregate").dump(2) << '\n';
            if (!report.failed().empty()) {
                spdlog::error("{} seed(s) failed", report.failed().size());
                return kExitRuntime;
            }
        } else if (*props_cmd) {
            const auto report = props::run_all({}, props_seed, golden_dir);
            std::cout << report.text();
            if (!report_path.empty()) {
                std::ofstream(report_path, std::ios::trunc) << report.to_json().dump(2) << '\n';
            }
            return report.all_passed() ? 0 : kExitRuntime;
        }
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return 0;
}
