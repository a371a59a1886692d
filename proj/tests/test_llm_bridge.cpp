#include <deque>
#include <functional>
#include <memory>

#include <gtest/gtest.h>

#include "jppo/env.hpp"
#include "jppo/llm_bridge.hpp"

using namespace jppo;
using namespace jppo::llm_bridge;

namespace {

// Canned responses replayed in order; every request is recorded.
struct Fixture {
    std::deque<std::function<HttpResponse(const HttpRequest&)>> script;
    std::vector<HttpRequest> seen;
    std::vector<std::string> warnings;

    void reply(int status, std::string body)
    {
        script.push_back([status, body](const HttpRequest&) { return HttpResponse{status, body}; });
    }

    void fail(std::function<HttpResponse(const HttpRequest&)> f) { script.push_back(std::move(f)); }

    BridgeClient client(BridgeConfig cfg = {})
    {
        return BridgeClient(
            std::move(cfg),
            [this](const HttpRequest& r) {
                seen.push_back(r);
                if (script.empty()) {
                    throw std::logic_error("fixture exhausted");
                }
                auto f = std::move(script.front());
                script.pop_front();
                return f(r);
            },
            [this](const std::string& w) { warnings.push_back(w); });
    }
};

std::string compress_body(std::int64_t orig, std::int64_t kept)
{
    return json{{"text", "compressed prompt"}, {"original_tokens", orig}, {"compressed_tokens", kept}}.dump();
}

} // namespace

TEST(Compress, RecordedFixtureQuarterRatio)
{
    Fixture fx;
    fx.reply(200, compress_body(388, 97));
    auto c = fx.client();
    const auto r = c.compress("a long meeting transcript prompt", 0.25);
    EXPECT_DOUBLE_EQ(r.achieved_kappa, 0.25);
    EXPECT_TRUE(r.ratio_in_band);
    EXPECT_EQ(r.compressed_text, "compressed prompt");
    EXPECT_EQ(r.attempts, 1);
    ASSERT_EQ(fx.seen.size(), 1u);
    const auto sent = json::parse(fx.seen[0].body);
    EXPECT_EQ(sent["target_ratio"], 0.25);
    EXPECT_EQ(fx.seen[0].url, BridgeConfig{}.compress_endpoint_url);
    EXPECT_TRUE(fx.warnings.empty());
}

TEST(Compress, NoCompressionBypassesTheService)
{
    Fixture fx;
    auto c = fx.client();
    const auto r = c.compress("keep me", 1.0);
    EXPECT_EQ(r.compressed_text, "keep me");
    EXPECT_EQ(r.achieved_kappa, 1.0);
    EXPECT_EQ(r.attempts, 0);
    EXPECT_TRUE(fx.seen.empty());
}

TEST(Compress, EmptyPromptRejectedBeforeAnyCall)
{
    Fixture fx;
    auto c = fx.client();
    EXPECT_THROW(c.compress("", 0.25), InvalidArgument);
    EXPECT_THROW(c.compress("x", 0.0), InvalidArgument);
    EXPECT_TRUE(fx.seen.empty());
}

TEST(Compress, OutOfBandRatioIsFlaggedNotFatal)
{
    Fixture fx;
    fx.reply(200, compress_body(388, 200));
    auto c = fx.client();
    const auto r = c.compress("prompt", 0.25);
    EXPECT_FALSE(r.ratio_in_band);
    EXPECT_NEAR(r.achieved_kappa, 200.0 / 388.0, 1e-15);
    EXPECT_EQ(fx.warnings.size(), 1u);
}

TEST(Compress, MalformedResponses)
{
    Fixture fx;
    fx.reply(200, "not json");
    fx.reply(200, R"({"text": "x"})");
    fx.reply(200, compress_body(10, 20));
    fx.reply(200, "[1, 2]");
    auto c = fx.client();
    for (int i = 0; i < 4; ++i) {
        EXPECT_THROW(c.compress("prompt", 0.5), MalformedResponse) << i;
    }
}

TEST(Score, IdenticalDisjointAndClamped)
{
    Fixture fx;
    fx.reply(200, R"({"score": 1.0})");
    fx.reply(200, R"({"score": 0.12})");
    fx.reply(200, R"({"score": 1.3})");
    auto c = fx.client();
    EXPECT_EQ(c.score_similarity("the same words", "the same words"), 1.0);
    EXPECT_LE(c.score_similarity("alpha beta gamma", "uno dos tres"), 0.2);
    EXPECT_TRUE(fx.warnings.empty());
    EXPECT_EQ(c.score_similarity("a", "b"), 1.0);
    ASSERT_EQ(fx.warnings.size(), 1u);
    EXPECT_NE(fx.warnings[0].find("clamped"), std::string::npos);
}

TEST(Score, NonNumericScoreIsMalformed)
{
    Fixture fx;
    fx.reply(200, R"({"score": "high"})");
    fx.reply(200, R"({"similarity": 0.5})");
    auto c = fx.client();
    EXPECT_THROW(c.score_similarity("a", "b"), MalformedResponse);
    EXPECT_THROW(c.score_similarity("a", "b"), MalformedResponse);
}

TEST(Transport, RetriesTransientFailures)
{
    Fixture fx;
    fx.reply(503, "");
    fx.fail([](const HttpRequest&) -> HttpResponse { throw BridgeError("connection reset", true); });
    fx.reply(200, R"({"score": 0.5})");
    auto c = fx.client();
    EXPECT_EQ(c.score_similarity("a", "b"), 0.5);
    EXPECT_EQ(fx.seen.size(), 3u);
    EXPECT_EQ(fx.warnings.size(), 2u);
}

TEST(Transport, GivesUpAfterMaxRetries)
{
    Fixture fx;
    for (int i = 0; i < 3; ++i) {
        fx.reply(429, "");
    }
    auto c = fx.client();
    EXPECT_THROW(c.score_similarity("a", "b"), BridgeError);
    EXPECT_EQ(fx.seen.size(), 3u);
}

TEST(Transport, ClientErrorsAreNotRetried)
{
    Fixture fx;
    fx.reply(401, "");
    auto c = fx.client();
    try {
        c.score_similarity("a", "b");
        FAIL() << "expected BridgeError";
    } catch (const BridgeError& e) {
        EXPECT_FALSE(e.transient());
    }
    EXPECT_EQ(fx.seen.size(), 1u);
}

TEST(Transport, TimeoutSurfacesAfterRetries)
{
    Fixture fx;
    for (int i = 0; i < 2; ++i) {
        fx.fail([](const HttpRequest& r) -> HttpResponse {
            EXPECT_EQ(r.timeout_s, 1.5);
            throw BridgeTimeout("read timed out");
        });
    }
    BridgeConfig cfg;
    cfg.timeout_s = 1.5;
    cfg.max_retries = 1;
    auto c = fx.client(cfg);
    EXPECT_THROW(c.compress("prompt", 0.5), BridgeTimeout);
    EXPECT_EQ(fx.seen.size(), 2u);
}

TEST(Transport, BearerHeaderOnlyWhenTokenSet)
{
    Fixture fx;
    fx.reply(200, R"({"score": 0.5})");
    fx.reply(200, R"({"score": 0.5})");
    BridgeConfig cfg;
    cfg.auth_token = "s3cret";
    auto with = fx.client(cfg);
    with.score_similarity("a", "b");
    auto without = fx.client();
    without.score_similarity("a", "b");
    EXPECT_EQ(fx.seen[0].headers.at("Authorization"), "Bearer s3cret");
    EXPECT_EQ(fx.seen[1].headers.count("Authorization"), 0u);
    EXPECT_EQ(fx.seen[1].headers.at("Content-Type"), "application/json");
}

TEST(Config, UrlValidation)
{
    EXPECT_EQ(parse_url("http://localhost:9000/v1/compress").port, 9000);
    EXPECT_EQ(parse_url("http://10.0.0.2").path, "/");
    EXPECT_THROW(parse_url("ftp://host/x"), ConfigError);
    EXPECT_THROW(parse_url("http://"), ConfigError);
    EXPECT_THROW(parse_url("http://host:99999/"), ConfigError);
    BridgeConfig cfg;
    cfg.score_endpoint_url = "not a url";
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = BridgeConfig{};
    cfg.timeout_s = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(BridgeClient(BridgeConfig{}, Transport{}), ConfigError);
}

TEST(RealFidelity, CombinesServiceScoresWithAnalyticCompleteness)
{
    Fixture fx;
    fx.reply(200, R"({"score": 0.9})");
    fx.reply(200, R"({"score": 0.8})");
    auto c = fx.client();
    CompressionResult comp;
    comp.compressed_text = "short";
    comp.achieved_kappa = 0.25;
    const fidelity::FidelityModelConfig model;
    const fidelity::FidelityWeights w;
    const auto f = real_fidelity(c, "original", comp, "answer", "reference answer", 0.1, model, w);
    EXPECT_EQ(f.f1, 0.9);
    EXPECT_EQ(f.f3, 0.8);
    EXPECT_DOUBLE_EQ(f.f2, fidelity::f2_completeness(0.25, 0.1, model));
    EXPECT_DOUBLE_EQ(f.f, 0.4 * 0.9 + 0.3 * f.f2 + 0.3 * 0.8);
}

TEST(MeasuredFidelity, InterpolatesAndStaysMonotone)
{
    const MeasuredFidelity m({{1.0, 1.0, 1.0}, {0.25, 0.8, 0.7}, {0.5, 0.75, 0.9}}, {}, {});
    const auto mid = m.score(0.375, 0.0);
    EXPECT_NEAR(mid.f1, 0.8, 1e-12); // running max lifts 0.75 to 0.8
    EXPECT_NEAR(mid.f3, 0.8, 1e-12);
    double prev = -1.0;
    for (double k = 0.05; k <= 1.0; k += 0.05) {
        const double f = m.score(k, 0.05).f;
        EXPECT_GE(f, prev);
        prev = f;
    }
    EXPECT_THROW(MeasuredFidelity({}, {}, {}), InvalidArgument);
}

TEST(MeasuredFidelity, PlugsIntoEnvironment)
{
    env::JppoEnv e{env::EnvConfig{}};
    e.set_fidelity_scorer(std::make_shared<MeasuredFidelity>(
        std::vector<MeasuredPoint>{{0.2, 0.85, 0.8}, {1.0, 1.0, 1.0}}, fidelity::FidelityModelConfig{},
        fidelity::FidelityWeights{}));
    const auto u = e.evaluate({4, 9}, 3.0, 0);
    EXPECT_NEAR(u.fidelity.f1, 0.85, 1e-12);
}
