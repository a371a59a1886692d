#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "jppo/channel.hpp"
#include "jppo/error.hpp"

namespace jppo::service {

inline constexpr int kNumCompressionLevels = 5;
inline constexpr int kNumPowerLevels = 10;
inline constexpr int kNumActions = kNumCompressionLevels * kNumPowerLevels;

/// Token lengths of the instruction, demonstrations and question parts.
struct PromptProfile {
    std::int64_t len_instruction = 0;
    std::int64_t len_demos = 0;
    std::int64_t len_question = 0;

    std::int64_t total_tokens() const { return len_instruction + len_demos + len_question; }

    void validate() const
    {
        detail::require(len_instruction >= 0 && len_demos >= 0 && len_question >= 0,
                        "prompt component lengths must be non-negative");
        detail::require(total_tokens() >= 1, "prompt must contain at least one token");
    }
};

/// Encode-time coefficients and GPU fleet for the SLM compressor and target LLM.
/// Defaults are the least-squares fit to configs/reference_timings.csv
/// (see calibrate.hpp) with output_tokens held at 60.
struct ComputeProfile {
    double slm_time_per_token_s = 0.034237734571365822;
    double llm_time_per_token_s = 0.097028416994070133;
    double llm_fixed_overhead_s = 42.256783352448815;
    std::int64_t output_tokens = 60;
    int slm_gpu_count = 1;
    double slm_gpu_power_w = 50.0;
    int llm_gpu_count = 4;
    double llm_gpu_power_w = 300.0;

    void validate() const
    {
        detail::require(slm_time_per_token_s >= 0.0, "compute.slm_time_per_token_s must be >= 0");
        detail::require(llm_time_per_token_s >= 0.0, "compute.llm_time_per_token_s must be >= 0");
        detail::require(llm_fixed_overhead_s >= 0.0, "compute.llm_fixed_overhead_s must be >= 0");
        detail::require(output_tokens >= 1, "compute.output_tokens must be >= 1");
        detail::require(slm_gpu_count >= 1 && llm_gpu_count >= 1, "GPU counts must be >= 1");
        detail::require(slm_gpu_power_w >= 0.0 && llm_gpu_power_w >= 0.0,
                        "GPU powers must be non-negative");
    }
};

/// Joint (compression level, power level) decision for one user.
struct Action {
    int compression_level = 0;
    int power_level = 0;

    bool valid() const
    {
        return compression_level >= 0 && compression_level < kNumCompressionLevels &&
               power_level >= 0 && power_level < kNumPowerLevels;
    }

    void validate() const
    {
        detail::require(valid(), "action levels out of range (compression 0-4, power 0-9)");
    }

    int index() const { return compression_level * kNumPowerLevels + power_level; }

    static Action from_index(int index)
    {
        detail::require(index >= 0 && index < kNumActions, "action index out of range [0, 49]");
        return Action{index / kNumPowerLevels, index % kNumPowerLevels};
    }

    friend bool operator==(const Action&, const Action&) = default;
};

struct CostBreakdown {
    double kappa = 1.0;
    std::int64_t tx_bits = 0;
    double energy_encode_j = 0.0;
    double energy_tx_j = 0.0;
    double energy_total_j = 0.0;
    double time_slm_s = 0.0;
    double time_llm_s = 0.0;
    double time_tx_s = 0.0;
    double time_total_s = 0.0;
};

struct Constraints {
    double energy_max_j = 1.05e5;
    double power_max_w = 5.0;
    double latency_max_s = 105.0;
    double fidelity_min = 0.75;

    void validate() const
    {
        detail::require(energy_max_j > 0.0, "constraints.energy_max_j must be positive");
        detail::require(power_max_w > 0.0, "constraints.power_max_w must be positive");
        detail::require(latency_max_s > 0.0, "constraints.latency_max_s must be positive");
        detail::require(fidelity_min >= 0.0 && fidelity_min < 1.0,
                        "constraints.fidelity_min must lie in [0, 1)");
    }
};

/// kappa = 1 / (level + 1): no compression at level 0, 4x at level 3.
inline double kappa_of_level(int compression_level)
{
    detail::require(compression_level >= 0 && compression_level < kNumCompressionLevels,
                    "compression level out of range [0, 4]");
    return 1.0 / static_cast<double>(compression_level + 1);
}

/// 0.5 W steps from 0.5 W (level 0) to 5.0 W (level 9).
inline double power_of_level(int power_level)
{
    detail::require(power_level >= 0 && power_level < kNumPowerLevels,
                    "power level out of range [0, 9]");
    return 0.5 * static_cast<double>(power_level + 1);
}

/// ceil(kappa * L). The small slack keeps exact quotients such as 300 / 3 from
/// rounding up because kappa = 1/3 is not representable.
inline std::int64_t compressed_tokens(const PromptProfile& profile, double kappa)
{
    detail::require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
    const double exact = kappa * static_cast<double>(profile.total_tokens());
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(exact - 1e-9 * exact)));
}

inline std::int64_t compressed_bits(const PromptProfile& profile, double kappa, int bits_per_token)
{
    detail::require(bits_per_token > 0, "bits_per_token must be positive");
    return compressed_tokens(profile, kappa) * bits_per_token;
}

struct EncodeTimes {
    double slm_s = 0.0;
    double llm_s = 0.0;
};

/// The SLM reads the whole original prompt (skipped when kappa = 1); the LLM
/// pays a fixed overhead plus a per-token cost over compressed input and output.
inline EncodeTimes encode_times(const PromptProfile& profile, double kappa,
                                const ComputeProfile& compute)
{
    const auto kept = compressed_tokens(profile, kappa);
    EncodeTimes t;
    t.slm_s = kappa < 1.0 ? compute.slm_time_per_token_s * static_cast<double>(profile.total_tokens())
                          : 0.0;
    t.llm_s = compute.llm_fixed_overhead_s +
              compute.llm_time_per_token_s * static_cast<double>(kept + compute.output_tokens);
    return t;
}

inline double energy_encode(const EncodeTimes& times, const ComputeProfile& compute)
{
    detail::require(times.slm_s >= 0.0 && times.llm_s >= 0.0, "encode times must be non-negative");
    return times.slm_s * compute.slm_gpu_count * compute.slm_gpu_power_w +
           times.llm_s * compute.llm_gpu_count * compute.llm_gpu_power_w;
}

struct TxCost {
    double energy_j = 0.0;
    double time_s = 0.0;
};

/// t_t = s / R and E_t = t_t * P_T. Throws OutageError when the rate is zero.
inline TxCost energy_and_time_tx(std::int64_t tx_bits, double p_tx_w, double rate_bps)
{
    detail::require(tx_bits > 0, "tx_bits must be positive");
    detail::require(p_tx_w > 0.0, "transmit power must be positive");
    if (!(rate_bps > 0.0)) {
        throw OutageError("link in outage: zero transmission rate");
    }
    TxCost tx;
    tx.time_s = static_cast<double>(tx_bits) / rate_bps;
    tx.energy_j = tx.time_s * p_tx_w;
    return tx;
}

/// Full per-request energy and latency for one action over an evaluated link.
inline CostBreakdown total_cost(const PromptProfile& profile, const Action& action,
                                const channel::LinkState& link, const ComputeProfile& compute,
                                const channel::ChannelParams& params)
{
    action.validate();
    CostBreakdown cost;
    cost.kappa = kappa_of_level(action.compression_level);
    cost.tx_bits = compressed_bits(profile, cost.kappa, params.bits_per_token);
    const auto times = encode_times(profile, cost.kappa, compute);
    const auto tx = energy_and_time_tx(cost.tx_bits, power_of_level(action.power_level), link.rate_bps);
    cost.time_slm_s = times.slm_s;
    cost.time_llm_s = times.llm_s;
    cost.time_tx_s = tx.time_s;
    cost.time_total_s = cost.time_slm_s + cost.time_llm_s + cost.time_tx_s;
    cost.energy_encode_j = energy_encode(times, compute);
    cost.energy_tx_j = tx.energy_j;
    cost.energy_total_j = cost.energy_encode_j + cost.energy_tx_j;
    return cost;
}

} // namespace jppo::service
