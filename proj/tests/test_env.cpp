#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "jppo/env.hpp"
#include "jppo/props.hpp"

using namespace jppo;
using namespace jppo::env;

TEST(Reset, SameSeedSameState)
{
    JppoEnv a{EnvConfig{}};
    JppoEnv b{EnvConfig{}};
    EXPECT_EQ(a.reset(42), b.reset(42));
    EXPECT_EQ(a.reset(42), a.reset(42));
    EXPECT_NE(a.reset(42), a.reset(43));
}

TEST(Reset, DimensionIsThreePerUser)
{
    EnvConfig cfg;
    cfg.num_users = 2;
    JppoEnv e(cfg);
    EXPECT_EQ(e.reset(0).size(), 6u);
    EXPECT_EQ(e.state_dim(), 6u);
}

TEST(Reset, ObservationComponentsInRange)
{
    JppoEnv e{EnvConfig{}};
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto obs = e.reset(s);
        EXPECT_GE(obs[0], 0.0);
        EXPECT_LE(obs[0], 1.0);
        EXPECT_GE(obs[1], 0.0);
        EXPECT_LT(obs[1], 1.0);
        EXPECT_GE(obs[2], 0.0);
        EXPECT_LE(obs[2], 0.5);
    }
}

TEST(Step, BeforeResetThrows)
{
    JppoEnv e{EnvConfig{}};
    const std::vector<Action> a{{0, 0}};
    EXPECT_THROW(e.step(a), std::logic_error);
}

TEST(Step, WrongActionCountRejected)
{
    JppoEnv e{EnvConfig{}};
    e.reset(0);
    const std::vector<Action> a{{0, 0}, {1, 1}};
    EXPECT_THROW(e.step(a), InvalidArgument);
}

TEST(Step, TerminatesAtHorizon)
{
    EnvConfig cfg;
    cfg.horizon = 3;
    JppoEnv e(cfg);
    e.reset(1);
    const std::vector<Action> a{{3, 4}};
    EXPECT_FALSE(e.step(a).terminal);
    EXPECT_FALSE(e.step(a).terminal);
    EXPECT_TRUE(e.step(a).terminal);
    EXPECT_THROW(e.step(a), std::logic_error);
}

TEST(Step, NearZeroNoiseLimit)
{
    EnvConfig cfg;
    cfg.channel.noise_power_w = 1e-30;
    JppoEnv e(cfg);
    for (int p = 0; p < service::kNumPowerLevels; ++p) {
        const auto u = e.evaluate({3, p}, 1.0, 0);
        EXPECT_EQ(u.link.ber, 0.0);
        EXPECT_FALSE(u.violated.contains(ViolationSet::latency));
        EXPECT_TRUE(u.violated.empty());
        EXPECT_NEAR(u.reward, 10.0 * u.fidelity.f - u.p_tx_w / 5.0, 1e-12);
    }
}

TEST(Step, PowerNeverViolatedOnDefaultGrid)
{
    JppoEnv e{EnvConfig{}};
    for (int a = 0; a < service::kNumActions; ++a) {
        for (double g : {0.01, 0.5, 1.0, 3.0}) {
            EXPECT_FALSE(e.evaluate(Action::from_index(a), g, 1).violated.contains(ViolationSet::power));
        }
    }
}

TEST(Step, OutageIsPenalizedNotThrown)
{
    JppoEnv e{EnvConfig{}};
    const auto u = e.evaluate({3, 4}, 0.0, 0);
    EXPECT_EQ(u.link.rate_bps, 0.0);
    EXPECT_TRUE(std::isinf(u.cost.time_total_s));
    EXPECT_TRUE(u.violated.contains(ViolationSet::latency));
    EXPECT_TRUE(u.violated.contains(ViolationSet::energy));
    EXPECT_TRUE(std::isfinite(u.reward));
}

TEST(Constraints, BoundariesAreExact)
{
    const service::Constraints c;
    service::CostBreakdown cost;
    cost.energy_total_j = c.energy_max_j;
    cost.time_total_s = c.latency_max_s;
    EXPECT_TRUE(check_constraints(cost, c.power_max_w, std::nextafter(c.fidelity_min, 1.0), c).empty());
    EXPECT_TRUE(check_constraints(cost, c.power_max_w, c.fidelity_min, c).contains(ViolationSet::fidelity));
    cost.energy_total_j = std::nextafter(c.energy_max_j, 1e9);
    EXPECT_TRUE(check_constraints(cost, 1.0, 0.9, c).contains(ViolationSet::energy));
}

TEST(Reward, Formula)
{
    ViolationSet v;
    v.insert(ViolationSet::latency);
    v.insert(ViolationSet::energy);
    EXPECT_DOUBLE_EQ(reward(0.9, 0.1, 2.5, v, RewardConfig{}, 5.0), 9.0 - 0.2 - 0.5 - 10.0);
}

TEST(Feasible, AllActionsUnderDefaults)
{
    EXPECT_EQ(feasible_actions(EnvConfig{}).size(), 50u);
}

TEST(Feasible, TightEnergyBudgetDropsUncompressed)
{
    EnvConfig cfg;
    cfg.constraints.energy_max_j = 1.0e5;
    const auto actions = feasible_actions(cfg);
    EXPECT_EQ(actions.size(), 40u);
    for (const auto& a : actions) {
        EXPECT_NE(a.compression_level, 0);
    }
}

TEST(Feasible, ZeroEnergyBudgetIsAnError)
{
    EnvConfig cfg;
    cfg.constraints.energy_max_j = 1e-12;
    EXPECT_THROW(feasible_actions(cfg), ConfigError);
    cfg.constraints.energy_max_j = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Feasible, LatencyBelowSlmFloorExcludesCompression)
{
    EnvConfig cfg;
    cfg.compute.slm_time_per_token_s = 1.0;
    cfg.compute.llm_time_per_token_s = 0.0;
    cfg.compute.llm_fixed_overhead_s = 1.0;
    cfg.constraints.latency_max_s = 10.0;
    const auto actions = feasible_actions(cfg);
    EXPECT_EQ(actions.size(), 10u);
    for (const auto& a : actions) {
        EXPECT_EQ(a.compression_level, 0);
    }
}

TEST(Golden, FrozenCasesReproduce)
{
    const auto cases = props::load_golden(std::string(JPPO_SOURCE_DIR) + "/tests/golden/cases.json");
    ASSERT_GE(cases.size(), 10u);
    for (const auto& c : cases) {
        const auto r = props::check_golden(c, 1e-9);
        EXPECT_TRUE(r.passed) << c.id << ": " << r.detail;
    }
}

TEST(Golden, StepRedrawsFading)
{
    EnvConfig cfg;
    JppoEnv e(cfg);
    e.reset(0);
    const std::vector<double> before(e.fading_gains().begin(), e.fading_gains().end());
    e.step(std::vector<Action>{{3, 7}});
    EXPECT_NE(before.front(), e.fading_gains().front());
}

TEST(Config, Validation)
{
    EnvConfig cfg;
    cfg.num_users = 0;
    EXPECT_THROW(JppoEnv{cfg}, InvalidArgument);
    cfg = EnvConfig{};
    cfg.prompts.clear();
    EXPECT_THROW(JppoEnv{cfg}, InvalidArgument);
}
