#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jppo/error.hpp"
#include "jppo/fidelity.hpp"

namespace jppo::llm_bridge {

using nlohmann::json;

/// Network or server failure; transient ones are retried.
class BridgeError : public std::runtime_error {
public:
    BridgeError(const std::string& what, bool transient) : std::runtime_error(what), transient_(transient) {}
    bool transient() const { return transient_; }

private:
    bool transient_;
};

class BridgeTimeout : public BridgeError {
public:
    explicit BridgeTimeout(const std::string& what) : BridgeError(what, true) {}
};

/// Server answered, but not with the documented shape.
class MalformedResponse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Url {
    std::string scheme;
    std::string host;
    int port = 80;
    std::string path;
};

inline Url parse_url(const std::string& url)
{
    static const std::regex re(R"(^(http)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(?::([0-9]{1,5}))?(/[^\s]*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        throw ConfigError("malformed endpoint URL (expected http://host[:port]/path): " + url);
    }
    Url u;
    u.scheme = m[1];
    u.host = m[2];
    u.port = m[3].matched ? std::stoi(m[3]) : 80;
    if (u.port < 1 || u.port > 65535) {
        throw ConfigError("endpoint port out of range: " + url);
    }
    u.path = m[4].matched ? std::string(m[4]) : "/";
    return u;
}

struct BridgeConfig {
    std::string compress_endpoint_url = "http://127.0.0.1:8080/compress";
    std::string score_endpoint_url = "http://127.0.0.1:8080/score";
    double timeout_s = 30.0;
    int max_retries = 2;
    std::optional<std::string> auth_token;
    /// Relative band around the requested ratio before a result is flagged.
    double kappa_tolerance = 0.2;

    void validate() const
    {
        parse_url(compress_endpoint_url);
        parse_url(score_endpoint_url);
        if (!(timeout_s > 0.0)) {
            throw ConfigError("bridge timeout_s must be positive");
        }
        if (max_retries < 0 || max_retries > 10) {
            throw ConfigError("bridge max_retries must lie in [0, 10]");
        }
    }
};

struct HttpRequest {
    std::string url;
    std::string body;
    std::map<std::string, std::string> headers;
    double timeout_s = 30.0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Performs one POST. Throws BridgeError / BridgeTimeout on transport failure.
using Transport = std::function<HttpResponse(const HttpRequest&)>;
using WarningSink = std::function<void(const std::string&)>;

struct CompressionResult {
    std::string compressed_text;
    std::int64_t original_tokens = 0;
    std::int64_t compressed_tokens = 0;
    double achieved_kappa = 1.0;
    double target_kappa = 1.0;
    bool ratio_in_band = true;
    int attempts = 0;
};

/// One request in flight per instance; create several for parallel use.
class BridgeClient {
public:
    BridgeClient(BridgeConfig cfg, Transport transport, WarningSink warn = {})
        : cfg_(std::move(cfg)), transport_(std::move(transport)), warn_(std::move(warn))
    {
        cfg_.validate();
        if (!transport_) {
            throw ConfigError("bridge transport must be set");
        }
    }

    CompressionResult compress(const std::string& prompt, double target_kappa)
    {
        detail::require(!prompt.empty(), "prompt must be non-empty");
        detail::require(target_kappa > 0.0 && target_kappa <= 1.0, "target_kappa must lie in (0, 1]");
        CompressionResult r;
        r.target_kappa = target_kappa;
        if (target_kappa == 1.0) {
            r.compressed_text = prompt;
            r.achieved_kappa = 1.0;
            return r;
        }
        const auto [body, attempts] = post(cfg_.compress_endpoint_url,
                                           json{{"text", prompt}, {"target_ratio", target_kappa}});
        r.attempts = attempts;
        try {
            r.compressed_text = body.at("text").get<std::string>();
            r.original_tokens = body.at("original_tokens").get<std::int64_t>();
            r.compressed_tokens = body.at("compressed_tokens").get<std::int64_t>();
        } catch (const json::exception& e) {
            throw MalformedResponse(std::string("compress: ") + e.what());
        }
        if (r.original_tokens <= 0 || r.compressed_tokens <= 0 || r.compressed_tokens > r.original_tokens) {
            throw MalformedResponse("compress: token counts must satisfy 0 < compressed <= original");
        }
        r.achieved_kappa = static_cast<double>(r.compressed_tokens) / static_cast<double>(r.original_tokens);
        r.ratio_in_band = std::abs(r.achieved_kappa - target_kappa) <= cfg_.kappa_tolerance * target_kappa;
        if (!r.ratio_in_band) {
            warn("compress: achieved kappa " + std::to_string(r.achieved_kappa) + " outside band of target " +
                 std::to_string(target_kappa));
        }
        return r;
    }

    double score_similarity(const std::string& a, const std::string& b)
    {
        detail::require(!a.empty() && !b.empty(), "texts must be non-empty");
        const auto [body, attempts] = post(cfg_.score_endpoint_url, json{{"a", a}, {"b", b}});
        double s = 0.0;
        try {
            const auto& v = body.at("score");
            if (!v.is_number()) {
                throw MalformedResponse("score: 'score' must be a number");
            }
            s = v.get<double>();
        } catch (const json::exception& e) {
            throw MalformedResponse(std::string("score: ") + e.what());
        }
        if (!std::isfinite(s)) {
            throw MalformedResponse("score: non-finite score");
        }
        if (s < 0.0 || s > 1.0) {
            const double c = std::clamp(s, 0.0, 1.0);
            warn("score: server returned " + std::to_string(s) + ", clamped to " + std::to_string(c));
            s = c;
        }
        return s;
    }

    const BridgeConfig& config() const { return cfg_; }

private:
    std::pair<json, int> post(const std::string& url, const json& payload)
    {
        HttpRequest req;
        req.url = url;
        req.body = payload.dump();
        req.timeout_s = cfg_.timeout_s;
        req.headers["Content-Type"] = "application/json";
        if (cfg_.auth_token && !cfg_.auth_token->empty()) {
            req.headers["Authorization"] = "Bearer " + *cfg_.auth_token;
        }
        for (int attempt = 1;; ++attempt) {
            try {
                const HttpResponse resp = transport_(req);
                if (resp.status == 429 || resp.status >= 500) {
                    throw BridgeError("HTTP " + std::to_string(resp.status) + " from " + url, true);
                }
                if (resp.status != 200) {
                    throw BridgeError("HTTP " + std::to_string(resp.status) + " from " + url, false);
                }
                try {
                    auto j = json::parse(resp.body);
                    if (!j.is_object()) {
                        throw MalformedResponse("response body is not a JSON object");
                    }
                    return {std::move(j), attempt};
                } catch (const json::parse_error& e) {
                    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
                }
            } catch (const BridgeError& e) {
                if (!e.transient() || attempt > cfg_.max_retries) {
                    throw;
                }
                warn(std::string("retrying after transient failure: ") + e.what());
            }
        }
    }

    void warn(const std::string& msg) const
    {
        if (warn_) {
            warn_(msg);
        }
    }

    BridgeConfig cfg_;
    Transport transport_;
    WarningSink warn_;
};

/// Real-mode scores for one request. f1 and f3 come from the similarity
/// service; f2 uses the analytic completeness term at the achieved ratio.
inline fidelity::FidelityReport real_fidelity(BridgeClient& client, const std::string& original,
                                              const CompressionResult& compressed,
                                              const std::string& response_to_compressed,
                                              const std::string& reference_response, double ber,
                                              const fidelity::FidelityModelConfig& model,
                                              const fidelity::FidelityWeights& weights)
{
    detail::require(!reference_response.empty(), "a reference response must be supplied");
    const double f1 = client.score_similarity(original, compressed.compressed_text);
    const double f2 = fidelity::f2_completeness(compressed.achieved_kappa, ber, model);
    const double f3 = client.score_similarity(response_to_compressed, reference_response);
    return fidelity::combine(f1, f2, f3, weights);
}

/// Measured zero-error scores per compression ratio, exposed through the
/// ordinary scorer interface so the environment can run on real data.
struct MeasuredPoint {
    double kappa = 1.0;
    double f1 = 1.0;
    double f3 = 1.0;
};

class MeasuredFidelity final : public fidelity::FidelityScorer {
public:
    MeasuredFidelity(std::vector<MeasuredPoint> points, fidelity::FidelityModelConfig model,
                     fidelity::FidelityWeights weights)
        : points_(std::move(points)), model_(model), weights_(weights)
    {
        detail::require(!points_.empty(), "at least one measured point is required");
        std::sort(points_.begin(), points_.end(), [](const auto& a, const auto& b) { return a.kappa < b.kappa; });
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& p = points_[i];
            detail::require(p.kappa > 0.0 && p.kappa <= 1.0, "measured kappa must lie in (0, 1]");
            detail::require(p.f1 >= 0.0 && p.f1 <= 1.0 && p.f3 >= 0.0 && p.f3 <= 1.0,
                            "measured scores must lie in [0, 1]");
            if (i > 0) {
                detail::require(p.kappa > points_[i - 1].kappa, "measured kappas must be distinct");
                // keep the scorer monotone in kappa even if raw measurements are noisy
                points_[i].f1 = std::max(points_[i].f1, points_[i - 1].f1);
                points_[i].f3 = std::max(points_[i].f3, points_[i - 1].f3);
            }
        }
    }

    fidelity::FidelityReport score(double kappa, double ber) const override
    {
        detail::require(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
        detail::require(ber >= 0.0 && ber <= 0.5, "ber must lie in [0, 0.5]");
        auto [f1, f3] = interpolate(kappa);
        const double f2 = fidelity::f2_completeness(kappa, ber, model_);
        f3 *= std::pow(1.0 - ber, model_.gamma3);
        return fidelity::combine(f1, f2, f3, weights_);
    }

private:
    std::pair<double, double> interpolate(double kappa) const
    {
        if (kappa <= points_.front().kappa) {
            return {points_.front().f1, points_.front().f3};
        }
        if (kappa >= points_.back().kappa) {
            return {points_.back().f1, points_.back().f3};
        }
        auto hi = std::lower_bound(points_.begin(), points_.end(), kappa,
                                   [](const MeasuredPoint& p, double k) { return p.kappa < k; });
        auto lo = hi - 1;
        const double t = (kappa - lo->kappa) / (hi->kappa - lo->kappa);
        return {lo->f1 + t * (hi->f1 - lo->f1), lo->f3 + t * (hi->f3 - lo->f3)};
    }

    std::vector<MeasuredPoint> points_;
    fidelity::FidelityModelConfig model_;
    fidelity::FidelityWeights weights_;
};

} // namespace jppo::llm_bridge
