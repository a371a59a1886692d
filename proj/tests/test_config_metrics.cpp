#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "jppo/config.hpp"
#include "jppo/metrics.hpp"

using namespace jppo;

namespace {

std::string source(const std::string& rel)
{
    return std::string(JPPO_SOURCE_DIR) + "/" + rel;
}

std::string error_of(const std::string& text)
{
    try {
        config::parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, DefaultFileEqualsBuiltInDefaults)
{
    const auto cfg = config::load(source("configs/default.json"));
    EXPECT_EQ(config::to_json(cfg), config::to_json(config::ExperimentConfig{}));
}

TEST(Config, RoundTripThroughJson)
{
    config::ExperimentConfig cfg;
    cfg.env.num_users = 3;
    cfg.env.constraints.latency_max_s = 90.0;
    cfg.env.fading_mode = env::FadingMode::fixed;
    cfg.env.fixed_fading_gain = 1.7;
    cfg.agent.hidden = {32};
    cfg.oracle.count = 8;
    const auto back = config::from_json(config::to_json(cfg));
    EXPECT_EQ(config::to_json(back), config::to_json(cfg));
    EXPECT_EQ(back.env.num_users, 3);
    EXPECT_EQ(back.env.fading_mode, env::FadingMode::fixed);
}

TEST(Config, EmptyObjectMeansDefaults)
{
    EXPECT_EQ(config::to_json(config::parse("{}")), config::to_json(config::ExperimentConfig{}));
}

TEST(Config, PartialOverride)
{
    const auto cfg = config::parse(R"({"constraints": {"latency_max_s": 80}, "run": {"episodes": 5}})");
    EXPECT_EQ(cfg.env.constraints.latency_max_s, 80.0);
    EXPECT_EQ(cfg.run.episodes, 5);
    EXPECT_EQ(cfg.env.constraints.energy_max_j, 1.05e5);
}

TEST(Config, UnknownKeyIsRejectedWithPath)
{
    const auto err = error_of(R"({"channel": {"bandwith_hz": 1e5}})");
    EXPECT_NE(err.find("unknown key 'channel.bandwith_hz'"), std::string::npos) << err;
    EXPECT_NE(error_of(R"({"chanel": {}})").find("unknown key 'chanel'"), std::string::npos);
    EXPECT_THROW(config::load(source("tests/fixtures/unknown_key.json")), ConfigError);
}

TEST(Config, WrongTypeIsRejected)
{
    const auto err = error_of(R"({"env": {"num_users": "two"}})");
    EXPECT_NE(err.find("env.num_users"), std::string::npos) << err;
    EXPECT_FALSE(error_of(R"({"env": {"num_users": 1.5}})").empty());
    EXPECT_FALSE(error_of(R"({"oracle": {"seed": -1}})").empty());
    EXPECT_FALSE(error_of(R"({"channel": []})").empty());
}

TEST(Config, SyntaxErrorReportsLineAndColumn)
{
    const auto err = error_of("{\n  \"env\": {\n    \"num_users\": 1,\n  }\n}\n");
    EXPECT_NE(err.find("line 4"), std::string::npos) << err;
    EXPECT_NE(err.find("column"), std::string::npos) << err;
    EXPECT_THROW(config::load(source("tests/fixtures/bad_config.json")), ConfigError);
}

TEST(Config, ValidationFailuresBecomeConfigErrors)
{
    EXPECT_THROW(config::parse(R"({"fidelity": {"weights": [0.5, 0.5, 0.5]}})"), ConfigError);
    EXPECT_THROW(config::parse(R"({"agent": {"discount": 1.0}})"), ConfigError);
    EXPECT_THROW(config::parse(R"({"env": {"num_users": 0}})"), ConfigError);
    EXPECT_THROW(config::load("/nonexistent/config.json"), ConfigError);
}

namespace {

agent::EpisodeMetrics sample_metrics()
{
    agent::EpisodeMetrics m;
    m.episode = 12;
    m.steps = 50;
    m.total_reward = 401.25;
    m.mean_reward = 8.025;
    m.mean_fidelity = 0.8861;
    m.mean_ber = 0.0723;
    m.mean_power_w = 2.5;
    m.mean_kappa = 0.3333333333333333;
    m.mean_latency_s = 70.125;
    m.violations = {1, 0, 2, 3};
    m.epsilon = 0.9417;
    m.mean_loss = 0.01;
    return m;
}

} // namespace

TEST(Metrics, EpisodeRoundTrip)
{
    const auto m = sample_metrics();
    std::stringstream ss;
    metrics::write_episode(ss, m);
    metrics::write_episode(ss, m);
    const auto back = metrics::read_episodes(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(metrics::to_json(back[0]), metrics::to_json(m));
    EXPECT_EQ(back[1].violations, m.violations);
}

TEST(Metrics, UnknownFieldRejected)
{
    auto j = metrics::to_json(sample_metrics());
    j["extra"] = 1;
    EXPECT_THROW(metrics::episode_from_json(j), ConfigError);
    auto v = metrics::to_json(sample_metrics());
    v["violations"]["bandwidth"] = 0;
    EXPECT_THROW(metrics::episode_from_json(v), ConfigError);
}

TEST(Metrics, MissingOrMistypedFieldRejected)
{
    auto j = metrics::to_json(sample_metrics());
    j.erase("mean_ber");
    EXPECT_THROW(metrics::episode_from_json(j), ConfigError);
    auto k = metrics::to_json(sample_metrics());
    k["steps"] = "fifty";
    EXPECT_THROW(metrics::episode_from_json(k), ConfigError);
    auto s = metrics::to_json(sample_metrics());
    s["schema"] = "jppo.episode.v0";
    EXPECT_THROW(metrics::episode_from_json(s), ConfigError);
    std::stringstream garbage("{not json}\n");
    EXPECT_THROW(metrics::read_episodes(garbage), ConfigError);
}

TEST(Metrics, SummaryWindows)
{
    std::vector<agent::EpisodeMetrics> ms;
    for (int i = 0; i < 10; ++i) {
        auto m = sample_metrics();
        m.episode = i;
        m.total_reward = i;
        ms.push_back(m);
    }
    const auto s = metrics::summary_series(ms, 4);
    ASSERT_EQ(s.at("series").size(), 3u);
    EXPECT_DOUBLE_EQ(s["series"][0]["mean_total_reward"].get<double>(), 1.5);
    EXPECT_DOUBLE_EQ(s["series"][2]["mean_total_reward"].get<double>(), 8.5);
    EXPECT_EQ(s["series"][2]["episode_end"], 9);
    EXPECT_THROW(metrics::summary_series(ms, 0), InvalidArgument);
}

TEST(Metrics, StepRecordNamesViolations)
{
    const env::JppoEnv e{env::EnvConfig{}};
    const auto u = e.evaluate({0, 0}, 0.0, 0);
    const auto j = metrics::step_json(1, 2, 0, u);
    EXPECT_EQ(j["schema"], metrics::kStepSchema);
    EXPECT_NE(std::find(j["violated"].begin(), j["violated"].end(), "latency"), j["violated"].end());
}
