#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jppo/channel.hpp"
#include "jppo/error.hpp"
#include "jppo/fidelity.hpp"
#include "jppo/rng.hpp"
#include "jppo/service.hpp"

namespace jppo::env {

using service::Action;

inline constexpr std::size_t kStateDim = 3;

/// Per-user observation: fidelity, normalized SNR, BER.
using StateVec = std::array<double, kStateDim>;

struct RewardConfig {
    double w_fidelity = 10.0;
    double w_ber = 2.0;
    double w_power = 1.0;
    double violation_penalty = 5.0;

    void validate() const
    {
        detail::require(w_fidelity > 0.0, "reward.w_fidelity must be positive");
        detail::require(w_ber >= 0.0 && w_power >= 0.0, "reward weights must be non-negative");
        detail::require(violation_penalty > 0.0, "reward.violation_penalty must be positive");
    }
};

struct WeightedPrompt {
    service::PromptProfile profile;
    double weight = 1.0;
};

enum class FadingMode { rayleigh, fixed };
enum class FadingRedraw { per_step, per_episode };

struct EnvConfig {
    int num_users = 1;
    channel::ChannelParams channel;
    std::vector<WeightedPrompt> prompts = {
        {{32, 300, 56}, 0.3},
        {{40, 500, 60}, 0.4},
        {{48, 680, 72}, 0.3},
    };
    service::ComputeProfile compute;
    service::Constraints constraints;
    fidelity::FidelityWeights weights;
    fidelity::FidelityModelConfig fidelity_cfg;
    RewardConfig reward_cfg;
    int horizon = 50;
    FadingMode fading_mode = FadingMode::rayleigh;
    double fixed_fading_gain = 1.0;
    FadingRedraw fading_redraw = FadingRedraw::per_step;
    /// Power level of the probe action used to build observations.
    int reference_power_level = 4;
    std::uint64_t seed = 0;

    void validate() const
    {
        detail::require(num_users >= 1, "env.num_users must be >= 1");
        detail::require(!prompts.empty(), "prompt distribution must be non-empty");
        double total = 0.0;
        for (const auto& p : prompts) {
            p.profile.validate();
            detail::require(p.weight >= 0.0, "prompt weights must be non-negative");
            total += p.weight;
        }
        detail::require(total > 0.0, "prompt weights must not all be zero");
        detail::require(horizon >= 1, "env.horizon must be >= 1");
        detail::require(fixed_fading_gain >= 0.0, "env.fixed_fading_gain must be non-negative");
        detail::require(reference_power_level >= 0 && reference_power_level < service::kNumPowerLevels,
                        "env.reference_power_level out of range [0, 9]");
        channel.validate();
        compute.validate();
        constraints.validate();
        fidelity_cfg.validate();
        reward_cfg.validate();
    }

    std::vector<double> prompt_weights() const
    {
        std::vector<double> w;
        w.reserve(prompts.size());
        for (const auto& p : prompts) {
            w.push_back(p.weight);
        }
        return w;
    }
};

/// Bit set over the four constraint tags.
class ViolationSet {
public:
    enum Tag : std::uint8_t { energy = 1, power = 2, latency = 4, fidelity = 8 };

    void insert(Tag t) { bits_ |= t; }
    bool contains(Tag t) const { return (bits_ & t) != 0; }
    bool empty() const { return bits_ == 0; }
    int count() const { return std::popcount(bits_); }
    std::uint8_t bits() const { return bits_; }

    friend bool operator==(const ViolationSet&, const ViolationSet&) = default;

private:
    std::uint8_t bits_ = 0;
};

inline constexpr std::array<std::pair<ViolationSet::Tag, const char*>, 4> kViolationNames = {{
    {ViolationSet::energy, "energy"},
    {ViolationSet::power, "power"},
    {ViolationSet::latency, "latency"},
    {ViolationSet::fidelity, "fidelity"},
}};

/// Flags each constraint the outcome breaks; the fidelity floor is strict.
inline ViolationSet check_constraints(const service::CostBreakdown& cost, double p_tx_w, double f,
                                      const service::Constraints& c)
{
    ViolationSet v;
    if (cost.energy_total_j > c.energy_max_j) {
        v.insert(ViolationSet::energy);
    }
    if (p_tx_w > c.power_max_w) {
        v.insert(ViolationSet::power);
    }
    if (cost.time_total_s > c.latency_max_s) {
        v.insert(ViolationSet::latency);
    }
    if (f <= c.fidelity_min) {
        v.insert(ViolationSet::fidelity);
    }
    return v;
}

inline double reward(double f, double ber, double p_tx_w, const ViolationSet& violated, const RewardConfig& r,
                     double power_max_w)
{
    return r.w_fidelity * f - r.w_ber * ber - r.w_power * (p_tx_w / power_max_w) -
           r.violation_penalty * static_cast<double>(violated.count());
}

struct UserOutcome {
    Action action;
    double p_tx_w = 0.0;
    std::size_t prompt_index = 0;
    channel::LinkState link;
    service::CostBreakdown cost;
    fidelity::FidelityReport fidelity;
    ViolationSet violated;
    double reward = 0.0;
};

struct StepOutcome {
    /// Concatenated per-user observations after the fading redraw.
    std::vector<double> next_state;
    std::vector<UserOutcome> users;
    bool terminal = false;
};

class JppoEnv {
public:
    explicit JppoEnv(EnvConfig config)
        : config_(std::move(config)),
          scorer_(std::make_shared<fidelity::SyntheticFidelity>(config_.fidelity_cfg, config_.weights)),
          ber_model_(channel::ber_bpsk),
          prompt_weights_(config_.prompt_weights())
    {
        config_.validate();
    }

    const EnvConfig& config() const { return config_; }

    void set_fidelity_scorer(std::shared_ptr<const fidelity::FidelityScorer> scorer)
    {
        detail::require(scorer != nullptr, "fidelity scorer must not be null");
        scorer_ = std::move(scorer);
    }

    void set_ber_model(channel::BerModel model) { ber_model_ = std::move(model); }

    std::size_t state_dim() const { return kStateDim * static_cast<std::size_t>(config_.num_users); }

    /// Reseeds, then draws a fading gain and prompt per user.
    std::vector<double> reset(std::uint64_t seed)
    {
        rng_.seed(seed);
        return begin_episode();
    }

    /// Starts a new episode continuing the current random stream (seeded from
    /// EnvConfig::seed at construction).
    std::vector<double> reset() { return begin_episode(); }

    StepOutcome step(std::span<const Action> actions)
    {
        if (!active_) {
            throw std::logic_error("step() called before reset() or after a terminal step");
        }
        detail::require(actions.size() == static_cast<std::size_t>(config_.num_users),
                        "one action per user is required");
        StepOutcome out;
        out.users.reserve(actions.size());
        for (std::size_t u = 0; u < actions.size(); ++u) {
            auto outcome = evaluate(actions[u], gains_[u], prompt_index_[u]);
            out.users.push_back(outcome);
        }
        ++step_count_;
        out.terminal = step_count_ >= config_.horizon;
        if (out.terminal) {
            active_ = false;
        }
        draw_request(config_.fading_redraw == FadingRedraw::per_step);
        out.next_state = observation();
        return out;
    }

    /// One user's outcome for a given fading gain and prompt; no state change.
    UserOutcome evaluate(const Action& action, double fading_gain, std::size_t prompt_index) const
    {
        action.validate();
        detail::require(prompt_index < config_.prompts.size(), "prompt index out of range");
        UserOutcome out;
        out.action = action;
        out.prompt_index = prompt_index;
        out.p_tx_w = service::power_of_level(action.power_level);
        const double kappa = service::kappa_of_level(action.compression_level);
        out.link = channel::evaluate_link(out.p_tx_w, fading_gain, config_.channel, ber_model_);
        const auto& prompt = config_.prompts[prompt_index].profile;
        try {
            out.cost = service::total_cost(prompt, action, out.link, config_.compute, config_.channel);
        } catch (const OutageError&) {
            out.cost = outage_cost(prompt, kappa);
        }
        out.fidelity = scorer_->score(kappa, out.link.ber);

        out.violated = check_constraints(out.cost, out.p_tx_w, out.fidelity.f, config_.constraints);
        out.reward = reward(out.fidelity.f, out.link.ber, out.p_tx_w, out.violated, config_.reward_cfg,
                            config_.constraints.power_max_w);
        return out;
    }

    /// Observation for a fading gain, probed with no compression at the
    /// reference power.
    StateVec observe(double fading_gain) const
    {
        const double p_ref = service::power_of_level(config_.reference_power_level);
        const double snr = channel::snr(p_ref, fading_gain, config_.channel);
        const double ber = std::clamp(ber_model_(snr), 0.0, 0.5);
        const double f = scorer_->score(1.0, ber).f;
        return StateVec{f, snr / (1.0 + snr), ber};
    }

    std::vector<double> observation() const
    {
        std::vector<double> s;
        s.reserve(state_dim());
        for (double g : gains_) {
            const auto o = observe(g);
            s.insert(s.end(), o.begin(), o.end());
        }
        return s;
    }

    std::span<const double> fading_gains() const { return gains_; }
    std::span<const std::size_t> prompt_indices() const { return prompt_index_; }
    int steps_taken() const { return step_count_; }

private:
    std::vector<double> begin_episode()
    {
        gains_.assign(static_cast<std::size_t>(config_.num_users), config_.fixed_fading_gain);
        prompt_index_.assign(static_cast<std::size_t>(config_.num_users), 0);
        draw_request(true);
        step_count_ = 0;
        active_ = true;
        return observation();
    }

    // Draw order per user: fading gain (Rayleigh mode only), then prompt.
    void draw_request(bool redraw_fading)
    {
        for (std::size_t u = 0; u < gains_.size(); ++u) {
            if (redraw_fading && config_.fading_mode == FadingMode::rayleigh) {
                gains_[u] = channel::sample_fading(rng_);
            }
            prompt_index_[u] = weighted_index(rng_, prompt_weights_);
        }
    }

    service::CostBreakdown outage_cost(const service::PromptProfile& prompt, double kappa) const
    {
        service::CostBreakdown cost;
        cost.kappa = kappa;
        cost.tx_bits = service::compressed_bits(prompt, kappa, config_.channel.bits_per_token);
        const auto times = service::encode_times(prompt, kappa, config_.compute);
        cost.time_slm_s = times.slm_s;
        cost.time_llm_s = times.llm_s;
        cost.time_tx_s = std::numeric_limits<double>::infinity();
        cost.time_total_s = cost.time_tx_s;
        cost.energy_encode_j = service::energy_encode(times, config_.compute);
        cost.energy_tx_j = std::numeric_limits<double>::infinity();
        cost.energy_total_j = cost.energy_tx_j;
        return cost;
    }

    EnvConfig config_;
    std::shared_ptr<const fidelity::FidelityScorer> scorer_;
    channel::BerModel ber_model_;
    std::vector<double> prompt_weights_;
    Rng rng_{config_.seed};
    bool active_ = false;
    int step_count_ = 0;
    std::vector<double> gains_;
    std::vector<std::size_t> prompt_index_;
};

/// Actions that can meet every constraint for at least one prompt of the
/// distribution under best-case fading (error-free, instantaneous link).
/// Throws ConfigError when nothing survives.
inline std::vector<Action> feasible_actions(const EnvConfig& config)
{
    const fidelity::SyntheticFidelity scorer(config.fidelity_cfg, config.weights);
    const auto& c = config.constraints;
    std::vector<Action> out;
    for (int i = 0; i < service::kNumActions; ++i) {
        const auto a = Action::from_index(i);
        if (service::power_of_level(a.power_level) > c.power_max_w) {
            continue;
        }
        const double kappa = service::kappa_of_level(a.compression_level);
        if (!(scorer.score(kappa, 0.0).f > c.fidelity_min)) {
            continue;
        }
        bool any = false;
        for (const auto& p : config.prompts) {
            if (p.weight <= 0.0) {
                continue;
            }
            const auto t = service::encode_times(p.profile, kappa, config.compute);
            const double e = service::energy_encode(t, config.compute);
            if (e <= c.energy_max_j && t.slm_s + t.llm_s <= c.latency_max_s) {
                any = true;
                break;
            }
        }
        if (any) {
            out.push_back(a);
        }
    }
    if (out.empty()) {
        throw ConfigError("no feasible action under the configured constraints");
    }
    return out;
}

} // namespace jppo::env
