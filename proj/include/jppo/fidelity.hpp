#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "jppo/error.hpp"

namespace jppo::fidelity {

/// Component weights; must sum to one.
class FidelityWeights {
public:
    FidelityWeights() = default;

    FidelityWeights(double w1, double w2, double w3) : w1_(w1), w2_(w2), w3_(w3)
    {
        detail::require(w1 >= 0.0 && w1 <= 1.0 && w2 >= 0.0 && w2 <= 1.0 && w3 >= 0.0 && w3 <= 1.0,
                        "fidelity weights must lie in [0, 1]");
        detail::require(std::abs(w1 + w2 + w3 - 1.0) <= 1e-9, "fidelity weights must sum to 1");
    }

    double w1() const { return w1_; }
    double w2() const { return w2_; }
    double w3() const { return w3_; }

private:
    double w1_ = 0.4;
    double w2_ = 0.3;
    double w3_ = 0.3;
};

struct FidelityReport {
    double f1 = 0.0;
    double f2 = 0.0;
    double f3 = 0.0;
    double f = 0.0;
};

/// Shape parameters of the analytic fidelity surrogate.
struct FidelityModelConfig {
    double beta1 = 0.1;
    double retention_exp = 6.0;
    double beta3 = 0.5;
    double gamma3 = 0.5;

    void validate() const
    {
        detail::require(beta1 > 0.0, "fidelity.beta1 must be positive");
        detail::require(retention_exp >= 1.0, "fidelity.retention_exp must be >= 1");
        detail::require(beta3 > 0.0 && gamma3 > 0.0, "fidelity.beta3 and gamma3 must be positive");
    }
};

/// Representation accuracy: kappa^beta1.
inline double f1_representation(double kappa, const FidelityModelConfig& cfg)
{
    detail::require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
    return std::pow(kappa, cfg.beta1);
}

/// Transmission completeness: essential-token retention 1 - (1 - kappa)^p,
/// times the bit survival probability 1 - ber.
inline double f2_completeness(double kappa, double ber, const FidelityModelConfig& cfg)
{
    detail::require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
    detail::require(ber >= 0.0 && ber <= 0.5, "ber must lie in [0, 0.5]");
    return (1.0 - std::pow(1.0 - kappa, cfg.retention_exp)) * (1.0 - ber);
}

/// Understanding accuracy: f1^beta3 (1 - ber)^gamma3.
inline double f3_understanding(double f1, double ber, const FidelityModelConfig& cfg)
{
    detail::require(f1 >= 0.0 && f1 <= 1.0, "f1 must lie in [0, 1]");
    detail::require(ber >= 0.0 && ber <= 0.5, "ber must lie in [0, 0.5]");
    return std::pow(f1, cfg.beta3) * std::pow(1.0 - ber, cfg.gamma3);
}

inline FidelityReport combine(double f1, double f2, double f3, const FidelityWeights& w)
{
    detail::require(f1 >= 0.0 && f1 <= 1.0 && f2 >= 0.0 && f2 <= 1.0 && f3 >= 0.0 && f3 <= 1.0,
                    "fidelity components must lie in [0, 1]");
    return FidelityReport{f1, f2, f3, w.w1() * f1 + w.w2() * f2 + w.w3() * f3};
}

/// Scores one request from its compression ratio and channel BER. Any
/// implementation must stay in [0, 1], be non-decreasing in kappa and
/// non-increasing in ber.
class FidelityScorer {
public:
    virtual ~FidelityScorer() = default;
    virtual FidelityReport score(double kappa, double ber) const = 0;
};

class SyntheticFidelity final : public FidelityScorer {
public:
    SyntheticFidelity(FidelityModelConfig cfg, FidelityWeights weights)
        : cfg_(cfg), weights_(weights)
    {
        cfg_.validate();
    }

    FidelityReport score(double kappa, double ber) const override
    {
        const double f1 = f1_representation(kappa, cfg_);
        const double f2 = f2_completeness(kappa, ber, cfg_);
        const double f3 = f3_understanding(f1, ber, cfg_);
        return combine(f1, f2, f3, weights_);
    }

    const FidelityModelConfig& config() const { return cfg_; }
    const FidelityWeights& weights() const { return weights_; }

private:
    FidelityModelConfig cfg_;
    FidelityWeights weights_;
};

} // namespace jppo::fidelity
