#include "indiff/errors.hpp"
#include "indiff/path_engine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace indiff;

namespace {

double mean_of(const Vec& v) { return v.mean(); }

double stderr_of(const Vec& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST(TimeGrid, UniformAndBlocked) {
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  EXPECT_EQ(g.steps(), 50u);
  EXPECT_EQ(g.time(0), 0.0);
  EXPECT_EQ(g.horizon(), 1.0);
  EXPECT_NEAR(g.dt(17), 0.02, 1e-15);

  const std::vector<double> b = {0.0, 1.0 / 3, 2.0 / 3, 1.0};
  const TimeGrid h = TimeGrid::blocked(b, 50);
  EXPECT_EQ(h.steps(), 50u);
  ASSERT_EQ(h.blocks(), 3u);
  EXPECT_EQ(h.block_starts(), (std::vector<std::size_t>{0, 17, 34, 50}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(h.time(h.block_starts()[j + 1]), b[j + 1]);
  EXPECT_THROW((void)TimeGrid::blocked(std::vector<double>{0.0, 0.5, 0.4}, 10), std::invalid_argument);
}

TEST(Brownian, MomentsAndIndependence) {
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const std::size_t M = 10000;
  const BrownianBatch b = simulate_brownian(g, 2, M, 7);
  const double tol_mean = 4.0 / std::sqrt(static_cast<double>(M));
  for (std::size_t k = 0; k < g.steps(); ++k) {
    const Mat& inc = b.increments[k];
    for (int j = 0; j < 2; ++j) {
      const Vec x = inc.col(j) / std::sqrt(g.dt(k));
      EXPECT_LE(std::abs(x.mean()), tol_mean);
      const double var = (x.array() - x.mean()).square().sum() / static_cast<double>(M - 1);
      EXPECT_NEAR(var, 1.0, 0.05);
    }
    const Vec a = inc.col(0), c = inc.col(1);
    const double corr = ((a.array() - a.mean()) * (c.array() - c.mean())).sum() /
                        std::sqrt((a.array() - a.mean()).square().sum() * (c.array() - c.mean()).square().sum());
    EXPECT_LE(std::abs(corr), tol_mean);
  }
}

TEST(Brownian, BitIdenticalAcrossRunsAndWorkers) {
  const TimeGrid g = TimeGrid::uniform(1.0, 20);
  const BrownianBatch a = simulate_brownian(g, 3, 1001, 42, 1);
  const BrownianBatch b = simulate_brownian(g, 3, 1001, 42, 1);
  const BrownianBatch c = simulate_brownian(g, 3, 1001, 42, 4);
  for (std::size_t k = 0; k < g.steps(); ++k) {
    EXPECT_TRUE((a.increments[k].array() == b.increments[k].array()).all());
    EXPECT_TRUE((a.increments[k].array() == c.increments[k].array()).all());
  }
  const BrownianBatch other = simulate_brownian(g, 3, 1001, 43, 1);
  EXPECT_FALSE((a.increments[0].array() == other.increments[0].array()).all());
}

TEST(Brownian, PathPrefixIndependentOfPathCount) {
  const TimeGrid g = TimeGrid::uniform(1.0, 5);
  const BrownianBatch small = simulate_brownian(g, 2, 10, 9);
  const BrownianBatch big = simulate_brownian(g, 2, 1000, 9);
  for (std::size_t k = 0; k < g.steps(); ++k) {
    EXPECT_TRUE((small.increments[k].array() == big.increments[k].topRows(10).array()).all());
  }
}

TEST(Evolve, LognormalMeanUnderP) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 1);
  const AssetPaths p = evolve_assets(s, g, b);
  const Vec ST = p.log_s[50].col(0).array().exp();
  EXPECT_NEAR(mean_of(ST), std::exp(0.10), 3.0 * stderr_of(ST));
  const Vec PT = p.log_p.col(50).array().exp();
  EXPECT_NEAR(mean_of(PT), std::exp(0.08), 3.0 * stderr_of(PT));
  for (const auto& m : p.log_s) EXPECT_TRUE(m.allFinite());
}

TEST(Evolve, ZeroVolatilityIsDeterministic) {
  Scenario s = reference_scenario();
  s.assets[1].sigma = Vec(Vec::Zero(2));
  const TimeGrid g = TimeGrid::uniform(1.0, 10);
  const BrownianBatch b = simulate_brownian(g, 2, 100, 3);
  const AssetPaths p = evolve_assets(s, g, b);
  for (std::size_t k = 0; k <= 10; ++k) {
    const Vec x = p.prices(k).col(1);
    const double expect = std::exp(0.06 * g.time(k));
    EXPECT_LE((x.array() - expect).abs().maxCoeff(), 1e-14);
  }
}

TEST(Evolve, ShiftedDriftGivesRiskAdjustedMean) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 2);
  // Minimal martingale shift n = (mu_P / |sigma_P|^2) sigma_P = (0.4, 0): the
  // first asset's drift drops by <sigma^1, n> = 0.06 to 0.04.
  const DriftShift shift = [](std::size_t, const Mat&) { return Mat(Eigen::RowVector2d(0.4, 0.0)); };
  const AssetPaths p = evolve_assets(s, g, b, shift, "Q", true);
  const Vec ST = p.log_s[50].col(0).array().exp();
  EXPECT_NEAR(mean_of(ST), std::exp(0.04), 3.0 * stderr_of(ST));
  // The index is a Q-martingale.
  const Vec PT = p.log_p.col(50).array().exp();
  EXPECT_NEAR(mean_of(PT), 1.0, 3.0 * stderr_of(PT));
  EXPECT_EQ(p.shift.size(), 50u);
  EXPECT_EQ(p.measure_tag, "Q");
}

TEST(Evolve, RejectsMismatchedGrid) {
  const Scenario s = reference_scenario();
  const BrownianBatch b = simulate_brownian(TimeGrid::uniform(1.0, 10), 2, 10, 1);
  EXPECT_THROW((void)evolve_assets(s, TimeGrid::uniform(1.0, 20), b), DimensionError);
  const BrownianBatch b3 = simulate_brownian(TimeGrid::uniform(1.0, 10), 3, 10, 1);
  EXPECT_THROW((void)evolve_assets(s, TimeGrid::uniform(1.0, 10), b3), DimensionError);
}

TEST(Evolve, MonitorTracksDiscreteAverage) {
  const Scenario s = reference_scenario().with_payoff(payoffs::capped_average(0, 2.0));
  const TimeGrid g = TimeGrid::uniform(1.0, 8);
  const BrownianBatch b = simulate_brownian(g, 2, 5, 4);
  const AssetPaths p = evolve_assets(s, g, b);
  for (int i = 0; i < 5; ++i) {
    double avg = 0.0;
    for (std::size_t k = 0; k <= 8; ++k) avg += std::exp(p.log_s[k](i, 0)) / 9.0;
    EXPECT_NEAR(p.aux[8](i, 0), avg, 1e-14);
  }
  EXPECT_EQ(regression_state(p, 3).cols(), 3);
}

TEST(Doleans, ZeroIntegrandGivesUnitWeights) {
  const TimeGrid g = TimeGrid::uniform(1.0, 10);
  const BrownianBatch b = simulate_brownian(g, 2, 100, 5);
  const MeasureChange mc = doleans_weights(std::vector<Mat>(10, Mat::Zero(1, 2)), b, g);
  EXPECT_TRUE((mc.weights.array() == 1.0).all());
  EXPECT_EQ(mc.bmo_estimate, 0.0);
}

TEST(Doleans, ConstantIntegrandIsMeanOne) {
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 6);
  const MeasureChange mc = doleans_weights(std::vector<Mat>(50, Mat(Eigen::RowVector2d(0.5, 0.0))), b, g);
  const Vec wT = mc.weights.col(50);
  EXPECT_NEAR(wT.mean(), 1.0, 3.0 * stderr_of(wT));
  EXPECT_GT(mc.weights.minCoeff(), 0.0);
  EXPECT_NEAR(mc.bmo_estimate, 0.25, 1e-12);
  EXPECT_THROW((void)doleans_weights(std::vector<Mat>(50, Mat::Constant(1, 2, NAN)), b, g), std::invalid_argument);
}

TEST(Doleans, GirsanovConsistencyForLinearFunctional) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 20);
  const BrownianBatch b = simulate_brownian(g, 2, 40000, 8);
  const Eigen::RowVector2d h(0.3, -0.2);
  const MeasureChange mc = doleans_weights(std::vector<Mat>(20, Mat(h)), b, g);
  // Under Q, W_T has mean h T.
  Vec WT = Vec::Zero(40000);
  for (const auto& inc : b.increments) WT += inc.col(0);
  const Vec weighted = mc.weights.col(20).cwiseProduct(WT);
  EXPECT_NEAR(weighted.mean(), 0.3, 3.0 * stderr_of(weighted));
}

TEST(Dump, WritesHeaderAndPayload) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 3);
  const BrownianBatch b = simulate_brownian(g, 2, 4, 1);
  const AssetPaths p = evolve_assets(s, g, b);
  const auto file = std::filesystem::temp_directory_path() / "indiff_paths_dump.bin";
  write_paths_binary(file, p);
  std::ifstream in(file, std::ios::binary);
  std::uint64_t hdr[3];
  in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  EXPECT_EQ(hdr[0], 4u);
  EXPECT_EQ(hdr[1], 3u);
  EXPECT_EQ(hdr[2], 2u);
  double first;
  in.read(reinterpret_cast<char*>(&first), sizeof first);
  EXPECT_EQ(first, 1.0);
  EXPECT_EQ(std::filesystem::file_size(file), 3 * 8 + (4 * 4 * 2 + 4 * 4) * 8u);
  std::filesystem::remove(file);
}

TEST(AntitheticBrownian, SecondHalfNegatesFirst) {
  const TimeGrid g = TimeGrid::uniform(1.0, 5);
  const BrownianBatch b = antithetic_brownian(g, 3, 4, 9);
  const BrownianBatch plain = simulate_brownian(g, 3, 4, 9);
  ASSERT_EQ(b.paths, 8u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(b.increments[k].topRows(4), plain.increments[k]);
    EXPECT_EQ(b.increments[k].bottomRows(4), -plain.increments[k]);
    EXPECT_EQ(b.increments[k].colwise().sum().cwiseAbs().maxCoeff(), 0.0);
  }
}
