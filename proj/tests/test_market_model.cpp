#include "indiff/errors.hpp"
#include "indiff/market_model.hpp"
#include "indiff/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace indiff;

namespace {

Scenario simple_index(double mu, double gamma) {
  Scenario s = reference_scenario();
  s.mu_P = mu;
  s.gamma = gamma;
  return s;
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  using P = Philox4x32;
  EXPECT_EQ(P::generate({0, 0, 0, 0}, {0, 0}), (P::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(P::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (P::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(P::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (P::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, UniformsStayInsideOpenInterval) {
  EXPECT_GT(open_uniform(0, 0), 0.0);
  EXPECT_LT(open_uniform(0xffffffffu, 0xffffffffu), 1.0);
}

TEST(Theta, ReferenceValues) {
  EXPECT_NEAR(theta_at(simple_index(0.08, 1.0), 0.0), 0.08, 1e-15);
  EXPECT_EQ(theta_at(simple_index(0.0, 1.0), 0.3), 0.0);
  EXPECT_NEAR(theta_at(simple_index(0.08, 2.0), 0.5), 0.04, 1e-15);
}

TEST(Theta, DegenerateIndexVolatilityIsRejected) {
  Scenario s = reference_scenario();
  s.sigma_P = Vec(Vec::Zero(2));
  try {
    (void)theta_at(s, 0.0);
    FAIL() << "expected rejection";
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.assumption(), "A2");
  }
}

TEST(Driver, ZeroAtOriginExactly) {
  const Scenario s = reference_scenario();
  EXPECT_EQ(driver_F(s, 0.0, Vec::Zero(2)), 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int i = 0; i < 100; ++i) {
    Scenario t = s;
    t.mu_P = u(rng) * 0.1;
    t.sigma_P = Vec{{u(rng) * 0.2, u(rng) * 0.1}};
    t.gamma = u(rng);
    EXPECT_EQ(driver_F(t, 0.0, Vec::Zero(2)), 0.0);
  }
}

TEST(Driver, ReferenceValues) {
  const Scenario s = reference_scenario();
  EXPECT_NEAR(driver_F(s, 0.0, Vec{{0.4, 0.0}}), -0.16, 1e-14);
  EXPECT_NEAR(driver_F(s, 0.0, Vec{{0.0, 0.3}}), -0.045, 1e-14);
  const Vec g0 = driver_grad(s, 0.0, Vec::Zero(2));
  EXPECT_NEAR(g0(0), -0.4, 1e-14);
  EXPECT_NEAR(g0(1), 0.0, 1e-15);
  const Vec z{{0.7, -1.3}};
  EXPECT_NEAR(driver_grad(s, 0.0, z)(1), 1.3, 1e-14);
}

TEST(Driver, GradientMatchesCentralDifferences) {
  const Scenario s = reference_scenario();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = ut(rng);
    const Vec z{{n(rng), n(rng)}};
    const Vec g = driver_grad(s, t, z);
    Vec fd(2);
    for (int j = 0; j < 2; ++j) {
      Vec zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      fd(j) = (driver_F(s, t, zp) - driver_F(s, t, zm)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1e-8, g.norm()));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Driver, GradientGrowthBoundedByK2) {
  const Scenario s = reference_scenario();
  const ConstantsLedger led = validate_scenario(s);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec z{{n(rng), n(rng)}};
    EXPECT_LE(driver_grad(s, 0.0, z).norm(), led.K2 * (1.0 + z.norm()));
    EXPECT_LE(std::abs(driver_at(s, 0.0).hessian_form(z)), led.K2 * z.squaredNorm());
  }
}

TEST(Driver, PerturbedDriverIsTheHessianQuadraticForm) {
  const DriverAt drv = driver_at(reference_scenario(), 0.0);
  const Vec p{{0.3, -0.2}};
  const Vec z{{-0.1, 0.25}};
  EXPECT_NEAR(drv.perturbed(p, z), 0.5 * drv.hessian_form(z), 1e-15);
  EXPECT_EQ(drv.perturbed(Vec::Zero(2), Vec::Zero(2)), 0.0);
}

TEST(Driver, RowwiseMatchesPointwise) {
  const DriverAt drv = driver_at(reference_scenario(), 0.0);
  Mat Z(3, 2);
  Z << 0.1, 0.2, -0.4, 0.0, 1.5, -2.0;
  Vec f(3);
  drv.apply(Z, f);
  const Mat G = drv.grad_rows(Z);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(f(i), drv.F(Z.row(i).transpose()), 1e-15);
    EXPECT_NEAR((G.row(i).transpose() - drv.grad(Z.row(i).transpose())).norm(), 0.0, 1e-15);
  }
}

TEST(Validate, ReferenceConstants) {
  const ConstantsLedger led = validate_scenario(reference_scenario());
  EXPECT_NEAR(led.K2, 2.08, 1e-12);
  ASSERT_TRUE(led.K3.has_value());
  EXPECT_NEAR(*led.K3, 2.0, 1e-15);
  EXPECT_NEAR(led.K4, 0.09, 1e-12);
  EXPECT_NEAR(led.theta_max, 0.08, 1e-15);
  EXPECT_NEAR(led.sharpe_max, 0.4, 1e-15);
  EXPECT_EQ(led.lambda_split_theoretical, 554u);
  EXPECT_EQ(led.partition.size(), 4u);
  EXPECT_NEAR(led.partition_bound, 1.0 / (8 * 4 * 0.09), 1e-12);
}

TEST(Validate, LedgerInvariantsHold) {
  const ConstantsLedger led = validate_scenario(reference_scenario());
  double sum = 0.0;
  for (double l : led.lambda_split) {
    sum += l;
    EXPECT_LE(l, 1.0 / (32 * led.K1 * led.K2 * led.K2) + 1e-15);
  }
  EXPECT_EQ(sum, 1.0);
  for (std::size_t j = 1; j < led.partition.size(); ++j) {
    EXPECT_LE(led.partition[j] - led.partition[j - 1], led.partition_bound);
  }
  EXPECT_GE(led.K2, 1.0);
}

TEST(Validate, RejectsZeroIndexVolatility) {
  Scenario s = reference_scenario();
  s.sigma_P = Vec(Vec::Zero(2));
  try {
    (void)validate_scenario(s);
    FAIL() << "expected rejection";
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.assumption(), "A2");
    EXPECT_NE(std::string(e.what()).find("A2"), std::string::npos);
  }
}

TEST(Validate, RejectsBadCoefficientsAndPayoffs) {
  Scenario s = reference_scenario();
  s.assets[0].mu = std::numeric_limits<double>::infinity();
  EXPECT_THROW((void)validate_scenario(s), ScenarioError);
  s = reference_scenario();
  s.payoff.g_max = 1.0;  // min(2, s) exceeds 1
  try {
    (void)validate_scenario(s);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.assumption(), "A3");
  }
  s = reference_scenario();
  s.gamma = 0.0;
  EXPECT_THROW((void)validate_scenario(s), ScenarioError);
}

TEST(Validate, DoublingLipschitzQuadruplesPartition) {
  Scenario s = reference_scenario();
  s.payoff.lipschitz_log = 4.0;
  const ConstantsLedger led = validate_scenario(s);
  EXPECT_EQ(led.partition.size() - 1, 12u);
  Scenario short_t = reference_scenario();
  short_t.T = 0.3;
  EXPECT_EQ(validate_scenario(short_t).partition.size() - 1, 1u);
}

TEST(SplitLambda, SpecExamples) {
  ConstantsLedger led;
  led.K1 = 1.0;
  led.K2 = 1.0;
  led.lambda_split_theoretical = 32;
  const auto parts = split_lambda(led, 1.0);
  ASSERT_EQ(parts.size(), 32u);
  for (double p : parts) EXPECT_NEAR(p, 1.0 / 32, 1e-17);
  const auto eight = split_lambda(led, 0.7, 8);
  double sum = 0.0;
  for (double p : eight) sum += p;
  EXPECT_EQ(sum, 0.7);
}

TEST(ThetaIntegral, MidpointOnPiecewiseSchedule) {
  Scenario s = reference_scenario();
  s.mu_P = ScalarSchedule({0.0, 0.5}, {0.08, 0.0});
  const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
  EXPECT_NEAR(theta_integral(s, times), 0.04, 1e-15);
}
