#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "jppo/env.hpp"
#include "jppo/error.hpp"
#include "jppo/rng.hpp"

namespace jppo::oracle {

// The evaluation below deliberately does not call into channel::, service::,
// fidelity:: or JppoEnv::evaluate. It recomputes the whole chain from the
// config so that agreement with the environment checks both.

struct Evaluation {
    double snr = 0.0;
    double rate_bps = 0.0;
    double ber = 0.0;
    double power_w = 0.0;
    double kappa = 0.0;
    std::int64_t tx_bits = 0;
    double time_slm_s = 0.0;
    double time_llm_s = 0.0;
    double time_tx_s = 0.0;
    double latency_s = 0.0;
    double energy_encode_j = 0.0;
    double energy_tx_j = 0.0;
    double energy_j = 0.0;
    double f1 = 0.0;
    double f2 = 0.0;
    double f3 = 0.0;
    double f = 0.0;
    std::uint8_t violated = 0; // bit 0 energy, 1 power, 2 latency, 3 fidelity
    double reward = 0.0;
};

/// Fading-gain range to average over; lo == hi is a deterministic channel.
struct FadingBand {
    double g_lo = 0.0;
    double g_hi = std::numeric_limits<double>::infinity();

    bool deterministic() const { return g_lo == g_hi; }
    double probability() const { return deterministic() ? 1.0 : std::exp(-g_lo) - std::exp(-g_hi); }
};

struct ExpectedReward {
    double mean = 0.0;
    double std_error = 0.0;
    double mean_fidelity = 0.0;
    double mean_ber = 0.0;
    double mean_latency_s = 0.0;
    std::size_t samples = 0;
};

struct PolicyBin {
    double snr_lo = 0.0;
    double snr_hi = 0.0;
    double probability = 0.0;
    env::Action best;
    double expected_reward = 0.0;
    double std_error = 0.0;
    double mean_fidelity = 0.0;
    double mean_ber = 0.0;
    double mean_power_w = 0.0;
    double mean_latency_s = 0.0;
};

/// Best action per bin of the observed (reference-power) SNR.
class PolicyTable {
public:
    std::vector<PolicyBin> bins;

    /// snr_bin_edges: bins.size() + 1 ascending values.
    std::vector<double> edges() const
    {
        std::vector<double> e;
        for (const auto& b : bins) {
            e.push_back(b.snr_lo);
        }
        if (!bins.empty()) {
            e.push_back(bins.back().snr_hi);
        }
        return e;
    }

    std::size_t bin_of(double snr) const
    {
        detail::require(!bins.empty(), "empty policy table");
        for (std::size_t b = 0; b + 1 < bins.size(); ++b) {
            if (snr < bins[b].snr_hi) {
                return b;
            }
        }
        return bins.size() - 1;
    }

    env::Action lookup(double snr) const { return bins[bin_of(snr)].best; }

    /// Action for an observation (the middle entry is snr / (1 + snr)).
    int act(const env::StateVec& state) const
    {
        const double s = std::clamp(state[1], 0.0, 1.0);
        const double snr = s < 1.0 ? s / (1.0 - s) : std::numeric_limits<double>::infinity();
        return lookup(snr).index();
    }

    double expected_optimum() const { return weighted([](const PolicyBin& b) { return b.expected_reward; }); }
    double mean_fidelity() const { return weighted([](const PolicyBin& b) { return b.mean_fidelity; }); }
    double mean_ber() const { return weighted([](const PolicyBin& b) { return b.mean_ber; }); }
    double mean_power_w() const { return weighted([](const PolicyBin& b) { return b.mean_power_w; }); }

    void write(std::ostream& os) const
    {
        os << "# jppo policy table v1\n";
        os << "bin snr_lo snr_hi probability compression_level power_level action_index "
              "expected_reward std_error mean_fidelity mean_ber mean_power_w mean_latency_s\n";
        os << std::setprecision(17);
        for (std::size_t i = 0; i < bins.size(); ++i) {
            const auto& b = bins[i];
            os << i << ' ' << b.snr_lo << ' ' << b.snr_hi << ' ' << b.probability << ' '
               << b.best.compression_level << ' ' << b.best.power_level << ' ' << b.best.index() << ' '
               << b.expected_reward << ' ' << b.std_error << ' ' << b.mean_fidelity << ' ' << b.mean_ber
               << ' ' << b.mean_power_w << ' ' << b.mean_latency_s << '\n';
        }
    }

    static PolicyTable read(std::istream& is)
    {
        PolicyTable t;
        std::string line;
        bool header_seen = false;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') {
                continue;
            }
            if (!header_seen) {
                if (line.rfind("bin ", 0) != 0) {
                    throw ConfigError("policy table: missing column header");
                }
                header_seen = true;
                continue;
            }
            std::istringstream ls(line);
            std::size_t idx = 0;
            int action_index = 0;
            std::string lo, hi;
            PolicyBin b;
            ls >> idx >> lo >> hi >> b.probability >> b.best.compression_level >> b.best.power_level >>
                action_index >> b.expected_reward >> b.std_error >> b.mean_fidelity >> b.mean_ber >>
                b.mean_power_w >> b.mean_latency_s;
            if (!ls || idx != t.bins.size() || !b.best.valid() || b.best.index() != action_index) {
                throw ConfigError("policy table: malformed row " + std::to_string(t.bins.size()));
            }
            b.snr_lo = std::stod(lo);
            b.snr_hi = std::stod(hi);
            t.bins.push_back(b);
        }
        if (t.bins.empty()) {
            throw ConfigError("policy table: no bins");
        }
        return t;
    }

private:
    template <typename F>
    double weighted(F&& value) const
    {
        double total = 0.0;
        double acc = 0.0;
        for (const auto& b : bins) {
            acc += b.probability * value(b);
            total += b.probability;
        }
        return total > 0.0 ? acc / total : 0.0;
    }
};

struct BinSpec {
    std::size_t count = 16;
    double snr_min = 0.01;
    double snr_max = 50.0;
    std::size_t mc_samples = 20000;
    std::uint64_t seed = 0;
};

class Oracle {
public:
    explicit Oracle(env::EnvConfig config) : cfg_(std::move(config))
    {
        cfg_.validate();
        for (const auto& p : cfg_.prompts) {
            prompt_weight_total_ += p.weight;
        }
    }

    const env::EnvConfig& config() const { return cfg_; }

    /// Transmit power of the observation probe.
    double reference_power_w() const { return 0.5 * (cfg_.reference_power_level + 1); }

    /// Received SNR per watt at unit fading.
    double snr_per_watt() const
    {
        return 1.0 / (cfg_.channel.noise_power_w * std::pow(cfg_.channel.distance_m, cfg_.channel.pathloss_exp));
    }

    /// Fading gain that shows up as the given observed SNR.
    double gain_of_observed_snr(double snr) const { return snr / (reference_power_w() * snr_per_watt()); }

    Evaluation evaluate(int action_index, double g, std::size_t prompt_index) const
    {
        detail::require(action_index >= 0 && action_index < service::kNumActions, "invalid action index");
        detail::require(prompt_index < cfg_.prompts.size(), "prompt index out of range");
        const int clevel = action_index / service::kNumPowerLevels;
        const int plevel = action_index % service::kNumPowerLevels;
        const auto& prompt = cfg_.prompts[prompt_index].profile;
        const auto& ch = cfg_.channel;
        const auto& cp = cfg_.compute;
        const auto& fm = cfg_.fidelity_cfg;
        const auto& lim = cfg_.constraints;
        const auto& rw = cfg_.reward_cfg;

        Evaluation e;
        e.power_w = 0.5 * (plevel + 1);
        e.kappa = 1.0 / (clevel + 1);
        e.snr = e.power_w * g * snr_per_watt();
        e.rate_bps = ch.bandwidth_hz * std::log(1.0 + e.snr) / std::log(2.0);
        e.ber = std::min(0.5, 0.5 * std::erfc(std::sqrt(e.snr)));

        const std::int64_t length = prompt.len_instruction + prompt.len_demos + prompt.len_question;
        const std::int64_t kept = (length + clevel) / (clevel + 1);
        e.tx_bits = kept * ch.bits_per_token;
        e.time_slm_s = clevel > 0 ? cp.slm_time_per_token_s * static_cast<double>(length) : 0.0;
        e.time_llm_s = cp.llm_fixed_overhead_s + cp.llm_time_per_token_s * static_cast<double>(kept + cp.output_tokens);
        e.time_tx_s = e.rate_bps > 0.0 ? static_cast<double>(e.tx_bits) / e.rate_bps
                                       : std::numeric_limits<double>::infinity();
        e.latency_s = e.time_slm_s + e.time_llm_s + e.time_tx_s;
        e.energy_encode_j = cp.slm_gpu_count * cp.slm_gpu_power_w * e.time_slm_s +
                            cp.llm_gpu_count * cp.llm_gpu_power_w * e.time_llm_s;
        e.energy_tx_j = e.power_w * e.time_tx_s;
        e.energy_j = e.energy_encode_j + e.energy_tx_j;

        const auto& w = cfg_.weights;
        e.f1 = std::pow(e.kappa, fm.beta1);
        e.f2 = (1.0 - std::pow(1.0 - e.kappa, fm.retention_exp)) * (1.0 - e.ber);
        e.f3 = std::pow(e.f1, fm.beta3) * std::pow(1.0 - e.ber, fm.gamma3);
        e.f = w.w1() * e.f1 + w.w2() * e.f2 + w.w3() * e.f3;

        int count = 0;
        auto flag = [&](bool hit, int bit) {
            if (hit) {
                e.violated |= static_cast<std::uint8_t>(1u << bit);
                ++count;
            }
        };
        flag(e.energy_j > lim.energy_max_j, 0);
        flag(e.power_w > lim.power_max_w, 1);
        flag(e.latency_s > lim.latency_max_s, 2);
        flag(e.f <= lim.fidelity_min, 3);
        e.reward = rw.w_fidelity * e.f - rw.w_ber * e.ber - rw.w_power * e.power_w / lim.power_max_w -
                   rw.violation_penalty * count;
        return e;
    }

    /// Reward averaged exactly over the prompt distribution at a fixed gain.
    double prompt_averaged_reward(int action_index, double g) const
    {
        return prompt_average(action_index, g).reward;
    }

    /// Expected reward of one action over a fading band. Deterministic bands
    /// are exact and ignore mc_samples.
    ExpectedReward expected_reward(int action_index, const FadingBand& band, std::size_t mc_samples,
                                   std::uint64_t seed) const
    {
        detail::require(action_index >= 0 && action_index < service::kNumActions, "invalid action index");
        if (band.deterministic()) {
            const auto avg = prompt_average(action_index, band.g_lo);
            return ExpectedReward{avg.reward, 0.0, avg.f, avg.ber, avg.latency_s, 1};
        }
        detail::require(mc_samples >= 1, "mc_samples must be >= 1");
        Rng rng(seed);
        const auto gains = sample_band(band, mc_samples, rng);
        return summarize(action_index, gains);
    }

    /// Exhaustive argmax over the 50 actions per observed-SNR bin. Within a bin
    /// all actions share one set of fading draws.
    PolicyTable optimal_policy(const BinSpec& spec) const
    {
        detail::require(spec.count >= 1, "at least one bin is required");
        PolicyTable table;
        if (cfg_.fading_mode == env::FadingMode::fixed) {
            const double g = cfg_.fixed_fading_gain;
            const double snr = g * reference_power_w() * snr_per_watt();
            table.bins.push_back(best_in(bin_over(snr, snr, 1.0), FadingBand{g, g}, spec.mc_samples, spec.seed));
            return table;
        }
        const auto edges = bin_edges(spec);
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            const FadingBand band{gain_of_observed_snr(edges[b]), gain_of_observed_snr(edges[b + 1])};
            table.bins.push_back(best_in(bin_over(edges[b], edges[b + 1], band.probability()), band, spec.mc_samples,
                                         derive_seed(spec.seed, b)));
        }
        return table;
    }

    /// 0, then count - 1 log-spaced inner edges from snr_min to snr_max, then +inf.
    static std::vector<double> bin_edges(const BinSpec& spec)
    {
        detail::require(spec.snr_min > 0.0 && spec.snr_max > spec.snr_min, "invalid SNR bin range");
        std::vector<double> edges{0.0};
        if (spec.count > 1) {
            const std::size_t inner = spec.count - 1;
            for (std::size_t i = 0; i < inner; ++i) {
                const double t = inner == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(inner - 1);
                edges.push_back(spec.snr_min * std::pow(spec.snr_max / spec.snr_min, t));
            }
        }
        edges.push_back(std::numeric_limits<double>::infinity());
        return edges;
    }

    /// Draws from Exp(1) truncated to the band, by inversion.
    static std::vector<double> sample_band(const FadingBand& band, std::size_t n, Rng& rng)
    {
        const double top = std::exp(-band.g_lo);
        const double bottom = std::isinf(band.g_hi) ? 0.0 : std::exp(-band.g_hi);
        std::vector<double> gains(n);
        for (auto& g : gains) {
            const double u = uniform01(rng);
            g = -std::log(top - u * (top - bottom));
            g = std::clamp(g, band.g_lo, band.g_hi);
        }
        return gains;
    }

private:
    static PolicyBin bin_over(double snr_lo, double snr_hi, double probability)
    {
        PolicyBin b;
        b.snr_lo = snr_lo;
        b.snr_hi = snr_hi;
        b.probability = probability;
        return b;
    }

    struct Averages {
        double reward = 0.0;
        double f = 0.0;
        double ber = 0.0;
        double latency_s = 0.0;
    };

    Averages prompt_average(int action_index, double g) const
    {
        Averages a;
        for (std::size_t i = 0; i < cfg_.prompts.size(); ++i) {
            const double w = cfg_.prompts[i].weight / prompt_weight_total_;
            if (w == 0.0) {
                continue;
            }
            const auto e = evaluate(action_index, g, i);
            a.reward += w * e.reward;
            a.f += w * e.f;
            a.ber += w * e.ber;
            a.latency_s += w * e.latency_s;
        }
        return a;
    }

    ExpectedReward summarize(int action_index, const std::vector<double>& gains) const
    {
        ExpectedReward r;
        r.samples = gains.size();
        double sum = 0.0;
        double sum_sq = 0.0;
        for (double g : gains) {
            const auto a = prompt_average(action_index, g);
            sum += a.reward;
            sum_sq += a.reward * a.reward;
            r.mean_fidelity += a.f;
            r.mean_ber += a.ber;
            r.mean_latency_s += a.latency_s;
        }
        const double n = static_cast<double>(gains.size());
        r.mean = sum / n;
        r.mean_fidelity /= n;
        r.mean_ber /= n;
        r.mean_latency_s /= n;
        if (gains.size() > 1) {
            const double var = std::max(0.0, (sum_sq - n * r.mean * r.mean) / (n - 1.0));
            r.std_error = std::sqrt(var / n);
        }
        return r;
    }

    PolicyBin best_in(PolicyBin bin, const FadingBand& band, std::size_t mc_samples, std::uint64_t seed) const
    {
        std::vector<double> gains;
        if (band.deterministic()) {
            gains = {band.g_lo};
        } else {
            detail::require(mc_samples >= 1, "mc_samples must be >= 1");
            Rng rng(seed);
            gains = sample_band(band, mc_samples, rng);
        }
        std::optional<ExpectedReward> best;
        int best_index = 0;
        for (int a = 0; a < service::kNumActions; ++a) {
            const auto r = summarize(a, gains);
            if (!best || r.mean > best->mean) {
                best = r;
                best_index = a;
            }
        }
        bin.best = env::Action::from_index(best_index);
        bin.expected_reward = best->mean;
        bin.std_error = best->std_error;
        bin.mean_fidelity = best->mean_fidelity;
        bin.mean_ber = best->mean_ber;
        bin.mean_power_w = 0.5 * (bin.best.power_level + 1);
        bin.mean_latency_s = best->mean_latency_s;
        return bin;
    }

    env::EnvConfig cfg_;
    double prompt_weight_total_ = 0.0;
};

using Policy = std::function<int(const env::StateVec&)>;

/// Greedy rollout statistics over user-steps.
struct RolloutStats {
    std::int64_t steps = 0;
    double mean_reward = 0.0;
    double mean_fidelity = 0.0;
    double mean_ber = 0.0;
    double mean_power_w = 0.0;
    double mean_kappa = 0.0;
    double mean_latency_s = 0.0;
    /// Same requests served by the kappa = 1, reference-power action.
    double baseline_latency_s = 0.0;
    double violation_rate = 0.0;
    std::array<std::int64_t, 4> violations{}; // energy, power, latency, fidelity
    std::vector<int> actions;                 // per user-step, in order

    double latency_improvement() const
    {
        return baseline_latency_s > 0.0 ? 1.0 - mean_latency_s / baseline_latency_s : 0.0;
    }
};

using StepObserver = std::function<void(std::int64_t episode, std::int64_t step, std::size_t user,
                                        const env::UserOutcome&)>;

inline RolloutStats rollout(const env::EnvConfig& config, const Policy& policy, std::int64_t episodes,
                            std::uint64_t seed, const StepObserver& observer = {})
{
    detail::require(episodes >= 1, "episodes must be >= 1");
    env::JppoEnv environment(config);
    const env::Action baseline{0, config.reference_power_level};
    const auto users = static_cast<std::size_t>(config.num_users);
    RolloutStats s;
    std::int64_t violating = 0;
    std::vector<env::Action> actions(users);
    for (std::int64_t ep = 0; ep < episodes; ++ep) {
        auto joint = ep == 0 ? environment.reset(seed) : environment.reset();
        for (std::int64_t step = 0;; ++step) {
            for (std::size_t u = 0; u < users; ++u) {
                env::StateVec st{};
                std::copy_n(joint.begin() + static_cast<std::ptrdiff_t>(u * env::kStateDim), env::kStateDim, st.begin());
                actions[u] = env::Action::from_index(policy(st));
                const auto base = environment.evaluate(baseline, environment.fading_gains()[u],
                                                       environment.prompt_indices()[u]);
                s.baseline_latency_s += base.cost.time_total_s;
            }
            const auto out = environment.step(actions);
            for (std::size_t u = 0; u < users; ++u) {
                const auto& o = out.users[u];
                ++s.steps;
                s.mean_reward += o.reward;
                s.mean_fidelity += o.fidelity.f;
                s.mean_ber += o.link.ber;
                s.mean_power_w += o.p_tx_w;
                s.mean_kappa += o.cost.kappa;
                s.mean_latency_s += o.cost.time_total_s;
                if (!o.violated.empty()) {
                    ++violating;
                }
                for (std::size_t k = 0; k < env::kViolationNames.size(); ++k) {
                    if (o.violated.contains(env::kViolationNames[k].first)) {
                        ++s.violations[k];
                    }
                }
                s.actions.push_back(o.action.index());
                if (observer) {
                    observer(ep, step, u, o);
                }
            }
            joint = out.next_state;
            if (out.terminal) {
                break;
            }
        }
    }
    const double n = static_cast<double>(s.steps);
    s.mean_reward /= n;
    s.mean_fidelity /= n;
    s.mean_ber /= n;
    s.mean_power_w /= n;
    s.mean_kappa /= n;
    s.mean_latency_s /= n;
    s.baseline_latency_s /= n;
    s.violation_rate = static_cast<double>(violating) / n;
    return s;
}

struct RegretReport {
    RolloutStats policy;
    RolloutStats oracle;
    /// Oracle-policy mean reward minus the tested policy's, on identical requests.
    double mean_reward_gap = 0.0;
    double action_agreement = 0.0;
    double table_expected_optimum = 0.0;
    std::string note =
        "oracle treats steps as independent given the observed SNR; cross-step structure is not credited";
};

/// Runs the tested policy and the table policy on the same seeded request
/// stream (the observation sequence does not depend on the actions taken).
inline RegretReport regret(const Policy& policy, const PolicyTable& table, const env::EnvConfig& config,
                           std::int64_t episodes, std::uint64_t seed)
{
    RegretReport r;
    r.policy = rollout(config, policy, episodes, seed);
    r.oracle = rollout(config, [&](const env::StateVec& s) { return table.act(s); }, episodes, seed);
    r.mean_reward_gap = r.oracle.mean_reward - r.policy.mean_reward;
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < r.policy.actions.size(); ++i) {
        agree += r.policy.actions[i] == r.oracle.actions[i] ? 1 : 0;
    }
    r.action_agreement = r.policy.actions.empty()
                             ? 0.0
                             : static_cast<double>(agree) / static_cast<double>(r.policy.actions.size());
    r.table_expected_optimum = table.expected_optimum();
    return r;
}

} // namespace jppo::oracle
