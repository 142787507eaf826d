#include "indiff/bsde_solver.hpp"
#include "indiff/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace indiff;

namespace {

constexpr double kReferenceDistortion = 1.0042793427345043;

struct Market {
  Scenario scenario;
  ConstantsLedger ledger;
  TimeGrid grid;
  BrownianBatch brownian;
  AssetPaths paths;

  Market(Scenario s, std::size_t M, std::size_t N, std::uint64_t seed)
      : scenario(std::move(s)),
        ledger(validate_scenario(scenario)),
        grid(TimeGrid::uniform(scenario.T, N)),
        brownian(simulate_brownian(grid, static_cast<std::size_t>(scenario.d), M, seed)),
        paths(evolve_assets(scenario, grid, brownian)) {}
};

}  // namespace

TEST(SolveBsde, ZeroClaimIsDeterministic) {
  Market st(reference_scenario(), 5000, 50, 1);
  const GridSolution sol = solve_bsde(st.scenario, st.grid, st.paths, st.brownian, 0.0, st.ledger);
  EXPECT_NEAR(sol.theta_integral, 0.08, 1e-15);
  for (Eigen::Index k = 0; k <= 50; ++k) EXPECT_TRUE((sol.Y.col(k).array() == sol.theta_integral).all());
  for (const auto& Z : sol.Z) EXPECT_TRUE((Z.array() == 0.0).all());
  EXPECT_TRUE((sol.V.array() == 0.0).all());
}

TEST(SolveBsde, TerminalValueIsExact) {
  Market st(reference_scenario(), 5000, 20, 2);
  const GridSolution sol = solve_bsde(st.scenario, st.grid, st.paths, st.brownian, 1.0, st.ledger);
  const Vec g = payoff_values(st.scenario, st.paths);
  EXPECT_TRUE((sol.Y.col(20).array() == (g.array() + sol.theta_integral)).all());
  const double bound = 2.0 + 0.08;
  EXPECT_LE(sol.Y.cwiseAbs().maxCoeff(), bound);
}

TEST(SolveBsde, ConstantClaimShiftsByCash) {
  Market st(reference_scenario().with_payoff(payoffs::constant(2.0)), 5000, 20, 3);
  const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
  EXPECT_NEAR(r.price, 2.0, 0.005 * 2.0);
  for (double h : r.hedge_mean) EXPECT_EQ(h, 0.0);
}

TEST(IndifferencePrice, IdenticalInputsGiveZero) {
  Market st(reference_scenario(), 5000, 20, 4);
  const GridSolution a = solve_bsde(st.scenario, st.grid, st.paths, st.brownian, 0.0, st.ledger);
  const PricingResult r = indifference_price(a, a);
  EXPECT_EQ(r.price, 0.0);
}

TEST(HedgeAndStrategy, MertonRatioAtZeroClaim) {
  Market st(reference_scenario().with_lambda(0.0), 5000, 20, 5);
  const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
  EXPECT_EQ(r.price, 0.0);
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_NEAR(r.strategy_mean[k], 2.0, 4.0 * r.strategy_stderr[k] + 1e-12);
    EXPECT_EQ(r.hedge_mean[k], 0.0);
  }
}

TEST(PriceBsde, ReferenceMatchesOracleAtModerateSize) {
  Market st(reference_scenario(), 50000, 50, 6);
  const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
  EXPECT_NEAR(r.price, kReferenceDistortion, 0.03 * kReferenceDistortion);
  EXPECT_GT(r.price_stderr, 0.0);
  EXPECT_LT(r.price_stderr, 0.01);
}

TEST(PriceBsde, OrthogonalCaseHasNoHedge) {
  Market st(orthogonal_reference_scenario(), 50000, 50, 7);
  const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
  for (std::size_t k = 0; k < 50; ++k) {
    EXPECT_LE(std::abs(r.hedge_mean[k]), 4.0 * r.hedge_stderr[k]) << "k = " << k;
  }
  EXPECT_NEAR(r.price, distortion_price(project_to_one_dim(st.scenario)), 0.03 * r.price);
}

TEST(PriceBsde, NearCompleteMarketHedgeMatchesDelta) {
  Market st(correlated_reference_scenario(0.999), 50000, 50, 8);
  const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
  const OneDimSpec o = project_to_one_dim(st.scenario);
  // Money in the index replicating the claim: -dC/dS * S * rho sigma_S / sigma_P.
  const double target = -complete_market_delta(o) * o.S0 * o.rho * o.sigma_S / o.sigma_P;
  EXPECT_NEAR(r.hedge_mean[0], target, 0.10 * std::abs(target));
}

TEST(PriceBsde, MonotoneInLambdaAndCashInvariant) {
  double prev = -1.0;
  double prev_se = 0.0;
  for (double lam : {0.5, 1.0, 2.0}) {
    Market st(reference_scenario().with_lambda(lam), 20000, 50, 9);
    const PricingResult r = price_bsde(st.scenario, st.grid, st.paths, st.brownian, st.ledger);
    EXPECT_GE(r.price, prev - 3.0 * std::hypot(r.price_stderr, prev_se));
    EXPECT_GE(r.price, -3.0 * r.price_stderr);
    EXPECT_LE(r.price, lam * 2.0 + 3.0 * r.price_stderr);
    prev = r.price;
    prev_se = r.price_stderr;
  }
  Market base(reference_scenario(), 20000, 50, 10);
  Scenario shifted = reference_scenario();
  const auto inner = shifted.payoff.g;
  shifted.payoff.g = [inner](std::span<const double> s, std::span<const double> a) { return inner(s, a) + 0.5; };
  shifted.payoff.g_max += 0.5;
  Market moved(shifted, 20000, 50, 10);
  const PricingResult a = price_bsde(base.scenario, base.grid, base.paths, base.brownian, base.ledger);
  const PricingResult b = price_bsde(moved.scenario, moved.grid, moved.paths, moved.brownian, moved.ledger);
  EXPECT_NEAR(b.price - a.price, 0.5, 0.005 * 0.5);
}

TEST(StrategyUtility, ZeroStrategyZeroClaim) {
  Market st(reference_scenario(), 20000, 20, 11);
  const Mat pi = Mat::Zero(20000, 20);
  const UtilityEstimate u = strategy_utility(st.scenario, st.grid, st.paths, st.brownian, pi, 0.0);
  EXPECT_EQ(u.value, 0.0);
  EXPECT_LE(u.value, 0.08);
}

TEST(StrategyUtility, OptimalStrategyReproducesValueAndShiftedIsWorse) {
  Market st(reference_scenario(), 50000, 50, 12);
  const GridSolution lam = solve_bsde(st.scenario, st.grid, st.paths, st.brownian, 1.0, st.ledger);
  const double y0 = lam.Y(0, 0);
  const double y0_se = sample_stderr(lam.y0_direct);
  // Evaluate the fitted strategy out of sample.
  const BrownianBatch fresh = simulate_brownian(st.grid, 2, 50000, 1012);
  const AssetPaths fresh_paths = evolve_assets(st.scenario, st.grid, fresh);
  const Mat pi = strategy_from_table(st.scenario, st.grid, fresh_paths, lam.z_table);
  const UtilityEstimate u = strategy_utility(st.scenario, st.grid, fresh_paths, fresh, pi, 1.0);
  EXPECT_NEAR(u.value, y0, 3.0 * std::hypot(u.standard_error, y0_se));
  const Mat worse_pi = (pi.array() + 0.5).matrix();
  const UtilityEstimate w = strategy_utility(st.scenario, st.grid, fresh_paths, fresh, worse_pi, 1.0);
  EXPECT_LT(w.value, u.value - 2.0 * u.standard_error);
}
