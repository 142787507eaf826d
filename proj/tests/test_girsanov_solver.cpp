#include "indiff/fde_solver.hpp"
#include "indiff/girsanov_solver.hpp"
#include "indiff/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace indiff;

TEST(Partition, ReferenceHasThreeBlocks) {
  const Scenario s = reference_scenario();
  const ConstantsLedger led = validate_scenario(s);
  const BlockPartition p = build_partition(led, s.T);
  ASSERT_EQ(p.blocks(), 3u);
  EXPECT_NEAR(p.bound, 1.0 / (8.0 * 4.0 * 0.09), 1e-12);
  EXPECT_LE(p.max_delta, p.bound);
  const TimeGrid g = partition_grid(p, 50);
  EXPECT_EQ(g.blocks(), 3u);
}

TEST(Partition, DoubledLipschitzQuadruplesBlocks) {
  const Scenario s = reference_scenario().with_payoff(payoffs::capped(0, 4.0));
  const ConstantsLedger led = validate_scenario(s);
  EXPECT_EQ(build_partition(led, s.T).blocks(), 12u);
  Scenario shortened = reference_scenario();
  shortened.T = 0.3;
  EXPECT_EQ(build_partition(validate_scenario(shortened), 0.3).blocks(), 1u);
}

TEST(Partition, MissingLipschitzDataCitesA4) {
  PayoffSpec p = payoffs::capped(0, 2.0);
  p.lipschitz_log.reset();
  const Scenario s = reference_scenario().with_payoff(p);
  try {
    (void)build_partition(validate_scenario(s), s.T);
    FAIL() << "expected rejection";
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.assumption(), "A4");
  }
}

TEST(NonlinearMeasure, DriverVanishesIdentically) {
  const DriverAt drv = driver_at(reference_scenario(), 0.0);
  Mat Z(4, 2);
  Z << 0.0, 0.0, 0.3, -0.2, -1.5, 2.0, 7.0, 0.01;
  const Mat n = nonlinear_measure_integrand(drv, Z);
  Vec f(4);
  drv.apply(Z, f);
  const Vec total = f + (Z.array() * n.array()).rowwise().sum().matrix();
  EXPECT_LE(total.cwiseAbs().maxCoeff(), 1e-14);
  // At Z = 0 the measure is the minimal martingale measure.
  EXPECT_NEAR(n(0, 0), 0.4, 1e-15);
  EXPECT_EQ(n(0, 1), 0.0);
}

TEST(ForwardBlock, ConstantContinuationConvergesAtOnce) {
  const Scenario s = reference_scenario().with_payoff(payoffs::constant(2.0));
  const ConstantsLedger led = validate_scenario(s);
  const TimeGrid g = TimeGrid::uniform(1.0, 10);
  const BrownianBatch b = simulate_brownian(g, 2, 2000, 3);
  ValueFunctionTable v;
  v.times = {0.0, 1.0};
  v.terminal = [](const Mat& x) { return Vec::Constant(x.rows(), 2.0); };
  const ForwardBlock fb = iterate_forward_block(s, g, 1, Mat::Zero(2000, 2), v, b, led);
  ASSERT_EQ(fb.history.size(), 1u);
  EXPECT_EQ(fb.history[0].norm_diff, 0.0);
  for (const auto& z : fb.Z) EXPECT_TRUE(z.isZero(0.0));
}

TEST(Girsanov, ZeroClaimAndCashAreExact) {
  for (double lam : {0.0, 1.0}) {
    const Scenario s = lam == 0.0 ? reference_scenario().with_lambda(0.0)
                                  : reference_scenario().with_payoff(payoffs::constant(2.0));
    const ConstantsLedger led = validate_scenario(s);
    const TimeGrid g = partition_grid(build_partition(led, s.T), 20);
    const BrownianBatch b = simulate_brownian(g, 2, 3000, 4);
    const GirsanovResult r = solve_nonlinear_girsanov(s, g, b, s.lambda, led);
    EXPECT_EQ(r.pricing.price, lam == 0.0 ? 0.0 : 2.0);
    for (double h : r.pricing.hedge_mean) EXPECT_EQ(h, 0.0);
  }
}

TEST(Girsanov, ReferenceContractsVanishesAndAgrees) {
  const Scenario s = reference_scenario();
  const ConstantsLedger led = validate_scenario(s);
  const TimeGrid g = partition_grid(build_partition(led, s.T), 50);
  const BrownianBatch b = simulate_brownian(g, 2, 20000, 5);
  const GirsanovResult r = solve_nonlinear_girsanov(s, g, b, 1.0, led);
  EXPECT_LE(r.max_ratio, 0.6);
  EXPECT_LE(r.vanish_residual, 1e-8 * 2.0);
  EXPECT_LE(r.v_q_norm, 1e-3);
  EXPECT_LE(r.values.lipschitz_estimate, 1.5 * *led.K3);
  EXPECT_NEAR(r.values.evaluate(0, Mat::Zero(1, 2))(0), r.q_terminal_mean, 3.0 * r.q_terminal_stderr);

  const AssetPaths p = evolve_assets(s, g, b);
  const PricingResult bsde = price_bsde(s, g, p, b, led);
  const double tol = std::max(0.02, 2.0 * std::hypot(bsde.price_stderr, r.pricing.price_stderr));
  EXPECT_NEAR(r.pricing.price, bsde.price, tol);
  EXPECT_NEAR(r.pricing.price, distortion_price(project_to_one_dim(s)), 0.03);
}
