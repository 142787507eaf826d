#pragma once

#include "indiff/routes.hpp"

#include <functional>
#include <string>
#include <vector>

namespace indiff {

/// Sample sizes for the acceptance criteria.
struct ValidationSizes {
  std::size_t oracle_paths = 200000;      // criterion 1
  std::size_t route_paths = 50000;        // cross-route and derived-scenario checks
  std::size_t perturbation_paths = 10000; // criterion 6 at the theoretical block count
  std::size_t steps = 50;
  std::uint64_t seed = 42;
  std::optional<std::size_t> j_override;  // criterion 6 block count, theoretical when empty
  std::size_t random_strategies = 20;
  double picard_tol = 1e-3;
  double vanish_tol = 1e-3;
  double K1 = 4.0;
  BasisSpec basis;
};

enum class CriterionStatus { pass, fail, skip };

struct CriterionResult {
  int id = 0;
  std::string name;
  CriterionStatus status = CriterionStatus::fail;
  std::string detail;
  double seconds = 0.0;
};

const char* status_label(CriterionStatus s);

/// "[PASS] 3 zero_claim ... (detail)".
std::string format_criterion(const CriterionResult& r);

/// Criteria 1-10 on `base` and scenarios derived from it. Exceptions inside a
/// criterion turn it into a failure with the message as detail. `on_result`
/// sees each criterion as soon as it finishes.
std::vector<CriterionResult> run_acceptance_suite(const Scenario& base, const ValidationSizes& sizes,
                                                  const std::function<void(const CriterionResult&)>& on_result = {});

/// Same scenario with the single payoff asset's volatility replaced by a
/// vector orthogonal to sigma_P of the same length. Throws when the payoff
/// does not depend on exactly one asset with constant coefficients.
Scenario orthogonal_variant(const Scenario& base);

}  // namespace indiff
