#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jppo/error.hpp"
#include "jppo/service.hpp"

namespace jppo::calibrate {

/// One observed end-to-end response time.
struct TimingRow {
    std::int64_t tokens = 0;
    double kappa = 1.0;
    double seconds = 0.0;
};

/// CSV with a "tokens,kappa,seconds" header; '#' starts a comment line.
inline std::vector<TimingRow> read_timings(std::istream& is)
{
    std::vector<TimingRow> rows;
    std::string line;
    bool header = false;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (!header) {
            if (line.rfind("tokens,kappa,seconds", 0) != 0) {
                throw ConfigError("timings line " + std::to_string(line_no) +
                                  ": expected header 'tokens,kappa,seconds'");
            }
            header = true;
            continue;
        }
        std::istringstream ls(line);
        TimingRow r;
        char c1 = 0;
        char c2 = 0;
        ls >> r.tokens >> c1 >> r.kappa >> c2 >> r.seconds;
        if (!ls || c1 != ',' || c2 != ',' || r.tokens < 1 || !(r.kappa > 0.0 && r.kappa <= 1.0) ||
            !(r.seconds >= 0.0)) {
            throw ConfigError("timings line " + std::to_string(line_no) + ": malformed row");
        }
        rows.push_back(r);
    }
    return rows;
}

struct ImprovementCheck {
    std::int64_t tokens = 0;
    double kappa = 1.0;
    double observed = 0.0; // fractional latency reduction vs kappa = 1
    double modeled = 0.0;
};

struct CalibrationResult {
    service::ComputeProfile profile;
    std::vector<double> predicted;
    std::vector<double> residuals; // predicted - observed
    double rms_residual_s = 0.0;
    std::vector<ImprovementCheck> improvements;
    /// 1 - sum T(kappa) / sum T(1) over prompts that have both measurements.
    double observed_mean_improvement = 0.0;
    double modeled_mean_improvement = 0.0;
};

namespace detail_fit {

inline double modeled_seconds(const service::ComputeProfile& p, std::int64_t tokens, double kappa)
{
    const service::PromptProfile prompt{0, tokens, 0};
    const auto t = service::encode_times(prompt, kappa, p);
    return t.slm_s + t.llm_s;
}

} // namespace detail_fit

/// Fits slm_time_per_token_s, llm_time_per_token_s and the fixed LLM overhead
/// to observed response times by non-negative least squares. The model
///   T = a * L * [kappa < 1] + b * ceil(kappa * L) + (overhead + b * output_tokens)
/// cannot separate overhead from output_tokens, so output_tokens is kept from
/// `base` unless that would force a negative overhead. Transmission time is
/// left out; it is milliseconds against tens of seconds of compute.
inline CalibrationResult fit(const std::vector<TimingRow>& rows, const service::ComputeProfile& base = {})
{
    if (rows.size() < 4) {
        throw InvalidArgument("underdetermined: calibration needs at least 4 timing rows");
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        const service::PromptProfile prompt{0, r.tokens, 0};
        x(i, 0) = r.kappa < 1.0 ? static_cast<double>(r.tokens) : 0.0;
        x(i, 1) = static_cast<double>(service::compressed_tokens(prompt, r.kappa));
        x(i, 2) = 1.0;
        y(i) = r.seconds;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < 3) {
        throw InvalidArgument("underdetermined: timing rows do not separate SLM, LLM and fixed costs");
    }

    // Non-negative least squares by enumerating the free set: the constrained
    // optimum is the unconstrained fit on its own support.
    Eigen::Vector3d best = Eigen::Vector3d::Zero();
    double best_sse = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < 8; ++mask) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index c = 0; c < 3; ++c) {
            if (mask & (1 << c)) {
                cols.push_back(c);
            }
        }
        Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            sub.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
        }
        const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(y);
        if ((coef.array() < 0.0).any()) {
            continue;
        }
        Eigen::Vector3d theta = Eigen::Vector3d::Zero();
        for (std::size_t k = 0; k < cols.size(); ++k) {
            theta(cols[k]) = coef(static_cast<Eigen::Index>(k));
        }
        const double sse = (x * theta - y).squaredNorm();
        if (!std::isfinite(best_sse) || sse < best_sse - 1e-12 * std::max(1.0, best_sse)) {
            best_sse = sse;
            best = theta;
        }
    }

    CalibrationResult result;
    auto& p = result.profile;
    p = base;
    p.slm_time_per_token_s = best(0);
    p.llm_time_per_token_s = best(1);
    const double intercept = best(2);
    if (p.llm_time_per_token_s > 0.0 &&
        intercept < p.llm_time_per_token_s * static_cast<double>(p.output_tokens)) {
        p.output_tokens = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::floor(intercept / p.llm_time_per_token_s)));
    }
    p.llm_fixed_overhead_s =
        std::max(0.0, intercept - p.llm_time_per_token_s * static_cast<double>(p.output_tokens));

    double sq = 0.0;
    for (const auto& r : rows) {
        const double pred = detail_fit::modeled_seconds(p, r.tokens, r.kappa);
        result.predicted.push_back(pred);
        result.residuals.push_back(pred - r.seconds);
        sq += (pred - r.seconds) * (pred - r.seconds);
    }
    result.rms_residual_s = std::sqrt(sq / static_cast<double>(rows.size()));

    // Pair every compressed measurement with the uncompressed one of the same length.
    std::map<std::int64_t, double> uncompressed;
    for (const auto& r : rows) {
        if (r.kappa == 1.0) {
            uncompressed[r.tokens] = r.seconds;
        }
    }
    double obs_base = 0.0, obs_comp = 0.0, mod_base = 0.0, mod_comp = 0.0;
    for (const auto& r : rows) {
        auto it = uncompressed.find(r.tokens);
        if (r.kappa == 1.0 || it == uncompressed.end()) {
            continue;
        }
        const double m1 = detail_fit::modeled_seconds(p, r.tokens, 1.0);
        const double mk = detail_fit::modeled_seconds(p, r.tokens, r.kappa);
        result.improvements.push_back({r.tokens, r.kappa, 1.0 - r.seconds / it->second, 1.0 - mk / m1});
        obs_base += it->second;
        obs_comp += r.seconds;
        mod_base += m1;
        mod_comp += mk;
    }
    if (obs_base > 0.0) {
        result.observed_mean_improvement = 1.0 - obs_comp / obs_base;
        result.modeled_mean_improvement = 1.0 - mod_comp / mod_base;
    }
    return result;
}

} // namespace jppo::calibrate
