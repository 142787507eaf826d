#pragma once

#include "indiff/market_model.hpp"

#include <functional>
#include <vector>

namespace indiff {

/// One non-traded asset against one index, constant coefficients.
struct OneDimSpec {
  double mu_S = 0.0;
  double sigma_S = 0.0;  // volatility magnitude
  double rho = 0.0;      // correlation with the index
  double mu_P = 0.0;
  double sigma_P = 0.0;
  double gamma = 1.0;
  double lambda = 1.0;
  double T = 1.0;
  double S0 = 1.0;
  std::function<double(double)> g;
  /// Prices where g has a kink; quadrature panels are split there.
  std::vector<double> kinks;
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' Gauss-Hermite rule, weights summing to one: integrates
/// against the standard normal density.
QuadratureRule gauss_hermite(std::size_t n);
/// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(std::size_t n);

/// E[h(Z)] for standard normal Z. Without breakpoints this is Gauss-Hermite;
/// with breakpoints, Gauss-Legendre panels on [-12, 12] split at them.
double normal_expectation(const std::function<double(double)>& h, std::size_t nodes,
                          const std::vector<double>& breakpoints = {});

/// Log-price drift of the asset after removing the index-spanned risk premium.
double risk_adjusted_drift(const OneDimSpec& spec);

/// -(1/(gamma (1 - rho^2))) ln E[exp(-gamma (1 - rho^2) lambda g(S_T))] under the
/// risk-adjusted lognormal law. Requires |rho| < 1.
double distortion_price(const OneDimSpec& spec, std::size_t quadrature_nodes = 128);

/// E[lambda g(S_T)] under the risk-adjusted law. Requires |rho| = 1.
double complete_market_price(const OneDimSpec& spec, std::size_t quadrature_nodes = 128);

/// d/dS0 of complete_market_price by central differences, evaluated as if
/// |rho| = 1.
double complete_market_delta(const OneDimSpec& spec, std::size_t quadrature_nodes = 128);

/// One-dimensional reduction of a constant-coefficient scenario whose payoff
/// reads a single asset at maturity.
OneDimSpec project_to_one_dim(const Scenario& scenario);

bool projects_to_one_dim(const Scenario& scenario);

}  // namespace indiff
