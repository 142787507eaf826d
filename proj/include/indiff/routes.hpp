#pragma once

#include "indiff/fde_solver.hpp"
#include "indiff/girsanov_solver.hpp"

#include <optional>
#include <string>

namespace indiff {

/// Sizes and tolerances shared by every route.
struct RouteOptions {
  std::size_t paths = 50000;
  std::size_t steps = 50;
  std::uint64_t seed = 42;
  double picard_tol = 1e-3;
  double vanish_tol = 1e-3;
  std::optional<std::size_t> j_override;
  BasisSpec basis;
};

/// Price, hedge and strategy on P-paths by the backward scheme.
PricingResult run_bsde_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& options);

/// Unsplit Picard iteration for lambda and for 0, then the pseudo-linear rule.
PricingResult run_fde_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& options);

/// Lambda split into j_override (or the theoretical count) blocks, each under
/// its own measure.
PricingResult run_perturbation_route(const Scenario& scenario, const ConstantsLedger& ledger,
                                     const RouteOptions& options);

/// Forward blocks on the partition grid. Throws ScenarioError("A4") without
/// log-Lipschitz data.
GirsanovResult run_girsanov_route(const Scenario& scenario, const ConstantsLedger& ledger, const RouteOptions& options);

struct OracleValue {
  double price = 0.0;
  std::string method;  // "distortion" or "complete_market"
};

/// Quadrature reference when the scenario reduces to one dimension.
std::optional<OracleValue> oracle_route(const Scenario& scenario);

/// lambda g_max, or 1 when that vanishes.
double claim_scale(const Scenario& scenario);

/// Integrand (mu_P / |sigma_P|^2) sigma_P of the minimal martingale measure at step k.
DriftShift minimal_martingale_shift(const Scenario& scenario, const TimeGrid& grid);

}  // namespace indiff
