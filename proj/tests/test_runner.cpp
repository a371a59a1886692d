#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "jppo/runner.hpp"

using namespace jppo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("jppo_runner_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

config::ExperimentConfig small_config()
{
    config::ExperimentConfig cfg;
    cfg.env.horizon = 10;
    cfg.agent.batch_size = 16;
    cfg.agent.hidden = {16, 16};
    cfg.run.episodes = 10;
    cfg.run.eval_episodes = 5;
    cfg.oracle.mc_samples = 200;
    return cfg;
}

} // namespace

TEST(Train, WritesOneRecordPerEpisode)
{
    const auto dir = scratch("train");
    const auto out = runner::train_run(small_config(), 3, 10, dir);
    std::ifstream is(dir / "metrics.jsonl");
    const auto ms = metrics::read_episodes(is);
    ASSERT_EQ(ms.size(), 10u);
    for (std::size_t i = 0; i < ms.size(); ++i) {
        EXPECT_EQ(ms[i].episode, static_cast<std::int64_t>(i));
        EXPECT_EQ(ms[i].steps, 10);
    }
    EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    const auto m = runner::RunManifest::load(dir / "manifest.json");
    EXPECT_EQ(m.command, "train");
    EXPECT_EQ(m.episodes, 10);
    EXPECT_EQ(m.seeds, std::vector<std::uint64_t>{3});
    EXPECT_EQ(m.tool_version, runner::kToolVersion);
    EXPECT_EQ(out.result.metrics.size(), 10u);
}

TEST(Train, RerunIsByteIdentical)
{
    const auto a = scratch("rerun_a");
    const auto b = scratch("rerun_b");
    runner::train_run(small_config(), 9, 12, a);
    runner::train_run(small_config(), 9, 12, b);
    EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
    EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
    const auto c = scratch("rerun_c");
    runner::train_run(small_config(), 10, 12, c);
    EXPECT_NE(slurp(a / "metrics.jsonl"), slurp(c / "metrics.jsonl"));
}

TEST(Train, ManifestReplayIsByteIdentical)
{
    const auto a = scratch("replay_a");
    const auto b = scratch("replay_b");
    runner::train_run(small_config(), 4, 8, a);
    const auto m = runner::RunManifest::load(a / "manifest.json");
    runner::replay_train(m, b);
    EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
    EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
    auto bad = m;
    bad.command = "oracle";
    EXPECT_THROW(runner::replay_train(bad, scratch("replay_bad")), ConfigError);
}

TEST(Manifest, RejectsUnknownSchema)
{
    EXPECT_THROW(runner::RunManifest::from_json({{"schema", "other"}}), ConfigError);
    EXPECT_THROW(runner::RunManifest::load("/nonexistent/manifest.json"), ConfigError);
}

TEST(Oracle, FixedChannelGivesSingleBin)
{
    auto cfg = small_config();
    cfg.env.fading_mode = env::FadingMode::fixed;
    cfg.env.fixed_fading_gain = 1.0;
    const auto dir = scratch("oracle_fixed");
    const auto table = runner::oracle_run(cfg, dir);
    EXPECT_EQ(table.bins.size(), 1u);
    EXPECT_EQ(runner::load_policy_table(dir / "policy_table.txt").bins.size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Oracle, DefaultGivesSixteenBinsWithErrors)
{
    const auto table = runner::oracle_run(small_config(), scratch("oracle_default"));
    ASSERT_EQ(table.bins.size(), 16u);
    for (const auto& b : table.bins) {
        EXPECT_GT(b.std_error, 0.0);
    }
}

TEST(Eval, OracleTableAsPolicyHasZeroRegret)
{
    const auto cfg = small_config();
    const auto table = runner::oracle_table(cfg);
    const auto s = runner::evaluate([&](const env::StateVec& st) { return table.act(st); }, cfg, table, 5, 11);
    EXPECT_EQ(s.oracle.mean_reward - s.policy.mean_reward, 0.0);
    EXPECT_EQ(s.action_agreement, 1.0);
    EXPECT_EQ(s.power_distance_w(), 0.0);
    const auto j = s.to_json();
    EXPECT_EQ(j["schema"], runner::kEvalSchema);
    EXPECT_EQ(j["regret"], 0.0);
}

TEST(Eval, CheckpointRoundTrip)
{
    const auto cfg = small_config();
    const auto dir = scratch("eval_ckpt");
    const auto tr = runner::train_run(cfg, 2, 5, dir);
    const auto table = runner::oracle_table(cfg);
    const auto from_file = runner::eval_checkpoint(dir / "checkpoint.bin", cfg, table, 3, 7);
    const auto direct = runner::evaluate(runner::greedy_policy(tr.result.current), cfg, table, 3, 7);
    EXPECT_EQ(from_file.policy.mean_reward, direct.policy.mean_reward);
    EXPECT_EQ(from_file.policy.actions, direct.policy.actions);
    agent::QNetwork<float> wrong({4, 8, 50});
    EXPECT_THROW(runner::greedy_policy(wrong), InvalidArgument);
}

TEST(Calibrate, FileAndJson)
{
    std::vector<calibrate::TimingRow> rows;
    const auto r = runner::calibrate_file(std::string(JPPO_SOURCE_DIR) + "/configs/reference_timings.csv", &rows);
    const auto j = runner::calibration_json(r, rows);
    EXPECT_EQ(j["points"].size(), 4u);
    EXPECT_TRUE(j.contains("modeled_mean_improvement"));
    EXPECT_THROW(runner::calibrate_file("/nonexistent.csv"), ConfigError);
}

TEST(Sweep, SingleSeedEqualsSingleRun)
{
    const auto cfg = small_config();
    const auto dir = scratch("sweep1");
    const auto report = runner::sweep_run(cfg, {1}, dir, 1);
    ASSERT_EQ(report.seeds.size(), 1u);
    ASSERT_TRUE(report.seeds[0].ok) << report.seeds[0].error;
    const auto tr = runner::train_run(cfg, 1, cfg.run.episodes, scratch("sweep1_single"));
    const auto table = runner::oracle_table(cfg);
    const auto single = runner::evaluate(runner::greedy_policy(tr.result.current), cfg, table,
                                         cfg.run.eval_episodes, cfg.run.eval_seed);
    for (const auto& [k, v] : runner::eval_scalars(single)) {
        EXPECT_EQ(report.aggregate.at(k).mean, v) << k;
        EXPECT_EQ(report.aggregate.at(k).stddev, 0.0) << k;
    }
    EXPECT_EQ(slurp(dir / "seed_1" / "checkpoint.bin"), slurp(dir.parent_path() / "sweep1_single" / "checkpoint.bin"));
    EXPECT_TRUE(fs::exists(dir / "sweep.json"));
    EXPECT_TRUE(fs::exists(dir / "oracle" / "policy_table.txt"));
}

TEST(Sweep, RepeatedSeedHasZeroSpreadAcrossWorkers)
{
    auto cfg = small_config();
    cfg.run.episodes = 4;
    const auto report = runner::sweep_run(cfg, {5, 5, 5}, scratch("sweep_same"), 3);
    // identical seeds write to one directory; only the in-memory results are compared
    for (const auto& [k, v] : report.aggregate) {
        EXPECT_EQ(v.stddev, 0.0) << k;
    }
}

TEST(Sweep, FailedSeedIsReportedAndOthersFinish)
{
    auto cfg = small_config();
    cfg.run.episodes = 4;
    const auto dir = scratch("sweep_fail");
    fs::create_directories(dir);
    std::ofstream(dir / "seed_2") << "blocks the run directory";
    const auto report = runner::sweep_run(cfg, {1, 2, 3}, dir, 2);
    EXPECT_EQ(report.failed(), std::vector<std::uint64_t>{2});
    EXPECT_TRUE(report.seeds[0].ok);
    EXPECT_TRUE(report.seeds[2].ok);
    const auto j = report.to_json();
    EXPECT_EQ(j["failed_seeds"].size(), 1u);
    EXPECT_FALSE(j["seeds"][1]["error"].get<std::string>().empty());
}

TEST(MeanStd, SampleStatistics)
{
    const auto r = runner::mean_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(r.mean, 2.5);
    EXPECT_NEAR(r.stddev, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(runner::mean_std({7.0}).stddev, 0.0);
}
