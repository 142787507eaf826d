#include "indiff/errors.hpp"
#include "indiff/path_engine.hpp"
#include "indiff/regression.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace indiff;

namespace {

Mat gaussian(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  return m;
}

double sd(const Vec& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST(Basis, ColumnLayout) {
  const PolynomialBasis full(2, {2, true});
  ASSERT_EQ(full.size(), 6u);
  EXPECT_EQ(full.column_name(0), "1");
  EXPECT_EQ(full.column_name(1), "x0");
  EXPECT_EQ(full.column_name(2), "x1");
  EXPECT_EQ(full.column_name(3), "x0^2");
  EXPECT_EQ(full.column_name(4), "x0*x1");
  EXPECT_EQ(full.column_name(5), "x1^2");
  EXPECT_EQ(PolynomialBasis(2, {2, false}).size(), 5u);
  EXPECT_EQ(PolynomialBasis(3, {3, true}).size(), 20u);
  EXPECT_THROW(PolynomialBasis(2, {0, true}), std::invalid_argument);
}

TEST(FitCondexp, TargetInSpanIsExact) {
  const Mat x = gaussian(2000, 2, 1);
  const Vec y = (3.0 + 2.0 * x.col(0).array()).matrix();
  const CondexpFit fit = fit_condexp(x, y, {1, true});
  EXPECT_LE(fit.residual_norm, 1e-10);
  EXPECT_LE(fit.normal_equation_residual, 1e-8);
  const CondexpFit fit2 = fit_condexp(x, y, {2, true});
  EXPECT_LE(fit2.residual_norm, 1e-10);
}

TEST(FitCondexp, IndependentNoiseFitsTheMean) {
  const Mat x = gaussian(5000, 2, 2);
  const Vec y = gaussian(5000, 1, 3).col(0).array() + 1.5;
  const CondexpFit fit = fit_condexp(x, y, {1, true});
  const double se = sd(y) / std::sqrt(5000.0);
  // Standardized regressors with unit spread: slope standard error ~ se.
  EXPECT_LE(std::abs(fit.coefficients(1)), 4.0 * se);
  EXPECT_LE(std::abs(fit.coefficients(2)), 4.0 * se);
  EXPECT_NEAR(fit.fitted.mean(), y.mean(), 1e-12);
}

TEST(FitCondexp, BrownianTowerSlope) {
  const TimeGrid g = TimeGrid::uniform(1.0, 2);
  const BrownianBatch b = simulate_brownian(g, 1, 20000, 5);
  const Vec Wt = b.increments[0].col(0);
  const Vec WT = Wt + b.increments[1].col(0);
  const CondexpFit fit = fit_condexp(Wt, WT, {1, true});
  // Coefficients are in standardized units: slope = beta_1 / sd(W_t).
  const double slope = fit.coefficients(1) / sd(Wt);
  const double se = std::sqrt(0.5 / (20000.0 * 0.5));
  EXPECT_NEAR(slope, 1.0, 3.0 * se);
}

TEST(FitCondexp, DependentColumnsAreDroppedAndReported) {
  Mat x(1000, 2);
  const Mat z = gaussian(1000, 1, 6);
  x.col(0) = z.col(0);
  x.col(1) = 2.0 * z.col(0);  // collinear feature
  const Vec y = z.col(0).array().square();
  const CondexpFit fit = fit_condexp(x, y, {2, true});
  EXPECT_FALSE(fit.dropped_columns.empty());
  EXPECT_LE(fit.residual_norm, 1e-9);
  for (std::size_t c : fit.dropped_columns) EXPECT_EQ(fit.coefficients(static_cast<Eigen::Index>(c)), 0.0);
}

TEST(FitCondexp, ConstantStateFallsBackToIntercept) {
  const Mat x = Mat::Ones(500, 2);
  const Vec y = gaussian(500, 1, 7).col(0);
  const CondexpFit fit = fit_condexp(x, y);
  EXPECT_EQ(fit.dropped_columns.size(), 5u);
  EXPECT_NEAR((fit.fitted.array() - y.mean()).abs().maxCoeff(), 0.0, 1e-14);
}

TEST(FitCondexp, TooFewPathsIsSignalled) {
  const Mat x = gaussian(100, 2, 8);
  const Vec y = x.col(0);
  try {
    (void)fit_condexp(x, y, {2, true});
    FAIL() << "expected rejection";
  } catch (const RegressionError& e) {
    EXPECT_EQ(e.offending_columns().size(), 6u);
  }
}

TEST(FitCondexp, ProjectionIsIdempotent) {
  const Mat x = gaussian(4000, 2, 9);
  const Vec y = (x.col(0).array().sin() + x.col(1).array().cube()).matrix();
  const Projector p(x, {2, true});
  const Vec once = p.project(y);
  const Vec twice = p.project(once);
  EXPECT_LE((once - twice).norm() / once.norm(), 1e-10);
}

TEST(EstimateZ, ConstantIntegrandRecovered) {
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const Scenario s = reference_scenario();
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 10);
  const AssetPaths paths = evolve_assets(s, g, b);
  const std::size_t k = 25;
  const Mat state = regression_state(paths, k);
  const Vec prev = state.col(0).array().exp();
  const Vec m = prev + 0.7 * b.increments[k].col(0);
  const ZEstimate z = estimate_Z(m, b.increments[k], g.dt(k), state);
  // Standard error of the mean target for each component.
  for (int j = 0; j < 2; ++j) {
    const double se = sd(z.targets.col(j)) / std::sqrt(20000.0);
    EXPECT_NEAR(z.Z.col(j).mean(), j == 0 ? 0.7 : 0.0, 3.0 * se);
  }
}

TEST(EstimateZ, DeterministicMartingaleGivesZero) {
  const Mat state = gaussian(1000, 2, 11);
  const Mat dW = gaussian(1000, 2, 12) * 0.1;
  const ZEstimate z = estimate_Z(Vec::Constant(1000, 3.0), dW, 0.01, state);
  EXPECT_TRUE((z.Z.array() == 0.0).all());
  // A state-measurable martingale value has no stochastic part either.
  const ZEstimate z2 = estimate_Z(state.col(0), dW, 0.01, state);
  EXPECT_LE(z2.Z.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EstimateZ, IdentityIntegrandOneStepToMaturity) {
  const TimeGrid g = TimeGrid::uniform(1.0, 1);
  const BrownianBatch b = simulate_brownian(g, 3, 20000, 13);
  const Mat state = Mat::Zero(20000, 3);
  const ZEstimate z = estimate_Z(b.increments[0].col(0), b.increments[0], 1.0, state);
  for (int j = 0; j < 3; ++j) {
    const double se = sd(z.targets.col(j)) / std::sqrt(20000.0);
    EXPECT_NEAR(z.Z(0, j), j == 0 ? 1.0 : 0.0, 4.0 * se);
  }
}

TEST(EstimateZ, ClippingIsCounted) {
  const Mat state = Mat::Zero(1000, 1);
  const Mat dW = gaussian(1000, 1, 14) * 0.1;
  const Vec m = 100.0 * dW.col(0);
  const ZEstimate z = estimate_Z(m, dW, 0.01, state, {}, 5.0);
  EXPECT_EQ(z.clip_count, 1000u);
  EXPECT_LE(z.Z.cwiseAbs().maxCoeff(), 5.0);
}

TEST(RegressionGrid, TowerPropertyOnReference) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 10);
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 15);
  const AssetPaths paths = evolve_assets(s, g, b);
  const RegressionGrid grid = build_regression_grid(paths, {});
  const Vec target = payoff_values(s, paths);
  const Vec nested = grid[5].project(grid[6].project(target));
  const Vec direct = grid[5].project(target);
  const double l2 = std::sqrt((nested - direct).squaredNorm() / 20000.0);
  EXPECT_LE(l2, 0.05 * s.payoff.g_max);
}

TEST(RegressionGrid, MartingaleReproducedByZ) {
  const Scenario s = reference_scenario();
  const TimeGrid g = TimeGrid::uniform(1.0, 50);
  const BrownianBatch b = simulate_brownian(g, 2, 100000, 16);
  const AssetPaths paths = evolve_assets(s, g, b);
  const RegressionGrid grid = build_regression_grid(paths, {});
  Vec next = payoff_values(s, paths);
  const Vec terminal = next;
  Vec stoch = Vec::Zero(next.size());
  for (std::size_t k = 50; k-- > 0;) {
    const ZEstimate z = estimate_Z(next, b.increments[k], g.dt(k), grid[k]);
    stoch += (z.Z.array() * b.increments[k].array()).rowwise().sum().matrix();
    next = grid[k].project(next);
  }
  const Vec inc = terminal.array() - next.mean();
  const double corr = ((inc.array() - inc.mean()) * (stoch.array() - stoch.mean())).sum() /
                      std::sqrt((inc.array() - inc.mean()).square().sum() * (stoch.array() - stoch.mean()).square().sum());
  EXPECT_GE(corr, 0.9);
}

TEST(ZTable, EvaluateMatchesFittedAndAdds) {
  const Mat x = gaussian(2000, 2, 17);
  const Projector p(x, {2, true});
  const Mat dW = gaussian(2000, 2, 18) * 0.1;
  const Vec m = x.col(0) + (x.col(0).array() * dW.col(0).array()).matrix();
  const ZEstimate z = estimate_Z(m, dW, 0.01, p);
  ZTable t = ZTable::zeros({2, true}, {p.standardization()}, 2);
  t.coefficients[0] = z.coefficients;
  EXPECT_LE((t.evaluate(0, x) - z.Z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((p.evaluate(z.coefficients, x) - z.Z).cwiseAbs().maxCoeff(), 1e-12);
  ZTable twice = t;
  twice += t;
  EXPECT_LE((twice.evaluate(0, x) - 2.0 * z.Z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PropagatedError, KeepsMeansAndStopsAtUnfittedStep) {
  const std::size_t M = 4000, N = 5;
  const Mat dW = gaussian(M, N, 17) * 0.2;
  const Mat noise = gaussian(M, N, 18);
  std::vector<Projector> projs;
  Vec x = Vec::Zero(M);
  for (std::size_t k = 0; k < N; ++k) {
    Mat state(static_cast<Eigen::Index>(M), 1);
    state.col(0) = x;
    projs.emplace_back(state, BasisSpec{2, true});
    x += dW.col(static_cast<Eigen::Index>(k));
  }
  std::vector<const Projector*> fitted(N);
  std::vector<Vec> direction(N);
  Mat innovation(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    fitted[k] = &projs[k];
    direction[k] = dW.col(kc);
    innovation.col(kc) = noise.col(kc) - projs[k].project(noise.col(kc));
  }
  fitted[3] = nullptr;
  const std::vector<double> dt(N, 0.04);
  Mat targets = Mat::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
  add_propagated_error(targets, direction, innovation, fitted, dt);

  for (Eigen::Index k = 0; k < targets.cols(); ++k) EXPECT_NEAR(targets.col(k).sum(), 0.0, 1e-8) << k;
  EXPECT_GT(targets.col(0).squaredNorm(), 0.0);
  // Step 2 would chain through the unfitted step 3; step 4 has no later fit.
  EXPECT_EQ(targets.col(2).squaredNorm(), 0.0);
  EXPECT_EQ(targets.col(4).squaredNorm(), 0.0);
}
