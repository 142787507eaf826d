#include "indiff/routes.hpp"

#include "indiff/oracles.hpp"

#include <cmath>

namespace indiff {

namespace {

FdeOptions fde_options(const RouteOptions& o) {
  FdeOptions f;
  f.picard.tol = o.picard_tol;
  f.solver.basis = o.basis;
  return f;
}

}  // namespace

PricingResult run_bsde_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& o) {
  const TimeGrid grid = TimeGrid::uniform(scenario.T, o.steps);
  const BrownianBatch b = simulate_brownian(grid, static_cast<std::size_t>(scenario.d), o.paths, o.seed);
  const AssetPaths paths = evolve_assets(scenario, grid, b);
  const RegressionGrid reg = build_regression_grid(paths, o.basis);
  SolverOptions so;
  so.basis = o.basis;
  PricingResult r = price_bsde(scenario, grid, paths, b, ledger, so, &reg);
  r.route = "bsde";
  return r;
}

PricingResult run_fde_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& o) {
  const TimeGrid grid = TimeGrid::uniform(scenario.T, o.steps);
  const BrownianBatch b = simulate_brownian(grid, static_cast<std::size_t>(scenario.d), o.paths, o.seed);
  const AssetPaths paths = evolve_assets(scenario, grid, b);
  const RegressionGrid reg = build_regression_grid(paths, o.basis);
  const FdeOptions fo = fde_options(o);
  const FdeSolution lam = picard_solve_fde(scenario, grid, paths, b, scenario.lambda, reg, ledger, fo);
  const FdeSolution zero = picard_solve_fde(scenario, grid, paths, b, 0.0, reg, ledger, fo);
  if (!lam.v.converged || !zero.v.converged) {
    throw ConvergenceError("Picard iteration did not reach picard_tol within max_iter", lam.v.history);
  }
  PricingResult r = price_pseudo_linear(scenario, grid, lam, zero, paths, scenario.lambda);
  r.ledger = ledger;
  return r;
}

PricingResult run_perturbation_route(const Scenario& scenario, const ConstantsLedger& ledger,
                                     const RouteOptions& o) {
  const TimeGrid grid = TimeGrid::uniform(scenario.T, o.steps);
  const BrownianBatch b = simulate_brownian(grid, static_cast<std::size_t>(scenario.d), o.paths, o.seed);
  const AssetPaths paths = evolve_assets(scenario, grid, b);
  const RegressionGrid reg = build_regression_grid(paths, o.basis);
  const PerturbationResult pr =
      solve_perturbation_scheme(scenario, grid, b, paths, standardizations(reg), ledger, o.j_override, fde_options(o));
  PricingResult r = price_perturbation(scenario, grid, paths, b, pr);
  r.ledger = ledger;
  return r;
}

GirsanovResult run_girsanov_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& o) {
  const TimeGrid grid = partition_grid(build_partition(ledger, scenario.T), o.steps);
  const BrownianBatch b = simulate_brownian(grid, static_cast<std::size_t>(scenario.d), o.paths, o.seed);
  GirsanovOptions go;
  go.vanish_tol = o.vanish_tol;
  go.solver.basis = o.basis;
  return solve_nonlinear_girsanov(scenario, grid, b, scenario.lambda, ledger, go);
}

std::optional<OracleValue> oracle_route(const Scenario& scenario) {
  if (!projects_to_one_dim(scenario)) return std::nullopt;
  const OneDimSpec spec = project_to_one_dim(scenario);
  if (std::abs(spec.rho) >= 1.0) return OracleValue{complete_market_price(spec), "complete_market"};
  return OracleValue{distortion_price(spec), "distortion"};
}

double claim_scale(const Scenario& scenario) {
  const double s = std::abs(scenario.lambda) * scenario.payoff.g_max;
  return s > 0.0 ? s : 1.0;
}

DriftShift minimal_martingale_shift(const Scenario& scenario, const TimeGrid& grid) {
  std::vector<Mat> n;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const DriverAt drv = driver_at(scenario, grid.time(k));
    n.push_back((drv.mu_P / drv.sigma_norm2) * drv.sigma_P.transpose());
  }
  return [n = std::move(n)](std::size_t k, const Mat&) { return n[k]; };
}

}  // namespace indiff
