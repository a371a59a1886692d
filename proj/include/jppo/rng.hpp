#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace jppo {

// mt19937_64's output sequence is fixed by the standard; every transform
// below is spelled out so draws are reproducible across standard libraries
// (and from the golden-file regeneration script).
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one engine output.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return i < n ? i : n - 1;
}

/// Exponential(1) by inversion; 1 - u lies in (0, 1] so the result is finite.
inline double exponential1(Rng& rng)
{
    return -std::log1p(-uniform01(rng));
}

/// Index drawn proportionally to non-negative weights.
inline std::size_t weighted_index(Rng& rng, std::span<const double> weights)
{
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (target < acc) {
            return i;
        }
    }
    return weights.size() - 1;
}

} // namespace jppo

namespace jppo {

/// SplitMix64 finalizer; derives independent stream seeds from one master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace jppo
