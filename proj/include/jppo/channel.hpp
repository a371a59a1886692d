#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "jppo/error.hpp"
#include "jppo/rng.hpp"

namespace jppo::channel {

struct ChannelParams {
    double bandwidth_hz = 1.0e5;
    double distance_m = 100.0;
    double pathloss_exp = 3.0;
    double noise_power_w = 1.0e-6;
    int bits_per_token = 16;

    void validate() const
    {
        detail::require(bandwidth_hz > 0.0, "channel.bandwidth_hz must be positive");
        detail::require(distance_m > 0.0, "channel.distance_m must be positive");
        detail::require(pathloss_exp >= 2.0, "channel.pathloss_exp must be >= 2");
        detail::require(noise_power_w > 0.0, "channel.noise_power_w must be positive");
        detail::require(bits_per_token > 0, "channel.bits_per_token must be positive");
    }

    /// Received SNR per transmitted watt at unit fading, d^-alpha / sigma^2.
    double snr_per_watt() const
    {
        return std::pow(distance_m, -pathloss_exp) / noise_power_w;
    }
};

struct LinkState {
    double fading_gain = 0.0;
    double snr = 0.0;
    double rate_bps = 0.0;
    double ber = 0.5;
};

/// Rayleigh block-fading power gain, exponentially distributed with unit mean.
inline double sample_fading(Rng& rng)
{
    return exponential1(rng);
}

inline double snr(double p_tx_w, double fading_gain, const ChannelParams& params)
{
    detail::require(p_tx_w > 0.0, "transmit power must be positive");
    detail::require(fading_gain >= 0.0, "fading gain must be non-negative");
    return p_tx_w * fading_gain * std::pow(params.distance_m, -params.pathloss_exp) /
           params.noise_power_w;
}

/// Shannon rate W log2(1 + snr) in bit/s.
inline double rate(double snr, const ChannelParams& params)
{
    detail::require(snr >= 0.0, "snr must be non-negative");
    return params.bandwidth_hz * std::log2(1.0 + snr);
}

/// Uncoded BPSK bit error rate, 0.5 erfc(sqrt(snr)), clamped to [0, 0.5].
inline double ber_bpsk(double snr)
{
    detail::require(snr >= 0.0, "snr must be non-negative");
    return std::clamp(0.5 * std::erfc(std::sqrt(snr)), 0.0, 0.5);
}

/// BER as a function of instantaneous SNR. Swappable; must be non-increasing
/// with ber(0) = 0.5.
using BerModel = std::function<double(double)>;

inline LinkState evaluate_link(double p_tx_w, double fading_gain, const ChannelParams& params,
                               const BerModel& ber_model = ber_bpsk)
{
    LinkState link;
    link.fading_gain = fading_gain;
    link.snr = snr(p_tx_w, fading_gain, params);
    link.rate_bps = rate(link.snr, params);
    link.ber = std::clamp(ber_model(link.snr), 0.0, 0.5);
    return link;
}

} // namespace jppo::channel
