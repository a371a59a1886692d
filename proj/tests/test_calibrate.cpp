#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "jppo/calibrate.hpp"

using namespace jppo;
using namespace jppo::calibrate;

namespace {

std::vector<TimingRow> reference_rows()
{
    std::ifstream is(std::string(JPPO_SOURCE_DIR) + "/configs/reference_timings.csv");
    return read_timings(is);
}

} // namespace

TEST(Fit, RecoversSyntheticProfileExactly)
{
    service::ComputeProfile truth;
    truth.slm_time_per_token_s = 0.021;
    truth.llm_time_per_token_s = 0.083;
    truth.llm_fixed_overhead_s = 31.5;
    truth.output_tokens = 60;
    std::vector<TimingRow> rows;
    for (std::int64_t tokens : {44, 150, 388, 700}) {
        for (double kappa : {1.0, 0.5, 0.25}) {
            const auto t = service::encode_times(service::PromptProfile{0, tokens, 0}, kappa, truth);
            rows.push_back({tokens, kappa, t.slm_s + t.llm_s});
        }
    }
    const auto r = fit(rows);
    EXPECT_NEAR(r.profile.slm_time_per_token_s, truth.slm_time_per_token_s, 1e-6);
    EXPECT_NEAR(r.profile.llm_time_per_token_s, truth.llm_time_per_token_s, 1e-6);
    EXPECT_NEAR(r.profile.llm_fixed_overhead_s, truth.llm_fixed_overhead_s, 1e-6);
    EXPECT_EQ(r.profile.output_tokens, 60);
    EXPECT_LT(r.rms_residual_s, 1e-9);
}

TEST(Fit, ReferencePointsResidualReport)
{
    const auto rows = reference_rows();
    ASSERT_EQ(rows.size(), 4u);
    const auto r = fit(rows);
    ASSERT_EQ(r.residuals.size(), 4u);
    EXPECT_GT(r.rms_residual_s, 0.0);
    EXPECT_LT(r.rms_residual_s, 5.0);
    ASSERT_EQ(r.improvements.size(), 2u);
    EXPECT_NEAR(100.0 * r.modeled_mean_improvement, 17.0, 5.0);
    EXPECT_NEAR(100.0 * r.observed_mean_improvement, 100.0 * (1.0 - (46.9 + 71.2) / (56.1 + 85.3)), 1e-9);
    EXPECT_GE(r.profile.slm_time_per_token_s, 0.0);
}

TEST(Fit, DefaultProfileIsTheFitOutput)
{
    const auto r = fit(reference_rows());
    const service::ComputeProfile d;
    EXPECT_NEAR(r.profile.slm_time_per_token_s, d.slm_time_per_token_s, 1e-12);
    EXPECT_NEAR(r.profile.llm_time_per_token_s, d.llm_time_per_token_s, 1e-12);
    EXPECT_NEAR(r.profile.llm_fixed_overhead_s, d.llm_fixed_overhead_s, 1e-9);
    EXPECT_EQ(r.profile.output_tokens, d.output_tokens);
}

TEST(Fit, IdenticalRowsAreUnderdetermined)
{
    const std::vector<TimingRow> rows(6, TimingRow{388, 0.25, 71.2});
    EXPECT_THROW(fit(rows), InvalidArgument);
    EXPECT_THROW(fit(std::vector<TimingRow>(2, TimingRow{44, 1.0, 50.0})), InvalidArgument);
}

TEST(Fit, StaysNonNegative)
{
    // Compression slower than no compression would need a negative LLM slope
    // if the SLM term were dropped; the fit must stay in the feasible region.
    const std::vector<TimingRow> rows{{100, 1.0, 10.0}, {100, 0.25, 30.0}, {400, 1.0, 10.0}, {400, 0.25, 50.0}};
    const auto r = fit(rows);
    EXPECT_GE(r.profile.slm_time_per_token_s, 0.0);
    EXPECT_GE(r.profile.llm_time_per_token_s, 0.0);
    EXPECT_GE(r.profile.llm_fixed_overhead_s, 0.0);
    EXPECT_NO_THROW(r.profile.validate());
}

TEST(ReadTimings, StrictFormat)
{
    std::istringstream ok("# c\ntokens,kappa,seconds\n10,0.5,3.0\n");
    EXPECT_EQ(read_timings(ok).size(), 1u);
    std::istringstream no_header("10,0.5,3.0\n");
    EXPECT_THROW(read_timings(no_header), ConfigError);
    std::istringstream bad_kappa("tokens,kappa,seconds\n10,1.5,3.0\n");
    EXPECT_THROW(read_timings(bad_kappa), ConfigError);
    std::istringstream bad_sep("tokens,kappa,seconds\n10;0.5;3.0\n");
    EXPECT_THROW(read_timings(bad_sep), ConfigError);
}
