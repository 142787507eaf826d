#pragma once

#include "indiff/bsde_solver.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace indiff {

struct PicardOptions {
  double tol = 1e-3;
  std::size_t max_iter = 25;
  /// Sweeps run even after the tolerance is met, so contraction ratios can
  /// be observed on fast-converging blocks.
  std::size_t min_iter = 1;
  /// Consecutive sweeps with ratio >= 1 that abort the iteration.
  std::size_t stall_limit = 3;
};

/// Finite-variation process on the grid, V_0 = 0 on every path.
struct VProcess {
  Mat V;  // paths x (N + 1)
  double norm_V = 0.0;
  std::vector<IterationRecord> history;
  bool converged = false;
  double fixed_point_residual = 0.0;
};

/// max_k mean_i |V_T - V_k|: grid times stand in for stopping times and the
/// cross-path mean for the conditional expectation.
double sampled_v_norm(const Mat& V);

/// Z produced from a given V by the affine functional, plus what is needed
/// to price and to attach standard errors.
struct ZFunctionalEval {
  std::vector<Mat> Z;  // N entries, paths x d
  ZTable table;
  Mat hedge_target;  // paths x N, <sigma_P, raw regression target>
  Vec stoch_integral;  // sum_k <Z_k, dW_k> per path
  std::size_t clip_count = 0;
};

/// Row-wise driver at step k.
using StepDriver = std::function<void(std::size_t k, const Mat& Z, Eigen::Ref<Vec> out)>;

/// F itself, for equations posed under P.
StepDriver pricing_driver(const Scenario& scenario, const TimeGrid& grid);
/// F(z) + <z, n_k>, the driver after a measure change with integrand n. The
/// integrand vector is referenced, not copied.
StepDriver shifted_driver(const Scenario& scenario, const TimeGrid& grid, const std::vector<Mat>& n);
/// F(p + z) - F(p) - <grad F(p), z>; for this driver it does not depend on p.
StepDriver perturbed_driver(const Scenario& scenario, const TimeGrid& grid);

struct FdeOptions {
  PicardOptions picard;
  SolverOptions solver;
};

/// Z(V): regress the continuation value of terminal_scale (lambda g + int theta)
/// + V_T - V_k backward along the grid and read off the martingale integrand.
ZFunctionalEval z_functional(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, const Mat& V, double lambda_value,
                             double terminal_scale, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const SolverOptions& options = {});

struct FdeSolution {
  VProcess v;
  ZFunctionalEval z;
};

/// Picard iteration V(m+1) = sum F(Z(V(m))) dt from V(0) = 0.
FdeSolution picard_solve_fde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, double lambda_value, const StepDriver& driver,
                             double terminal_scale, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const FdeOptions& options = {}, std::size_t block = 0);

/// Same iteration under P with the pricing driver.
FdeSolution picard_solve_fde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, double lambda_value, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const FdeOptions& options = {});

/// mean(lambda g) + mean(V^l_T) - mean(V^0_T), hedge from Z^l - Z^0.
PricingResult price_pseudo_linear(const Scenario& scenario, const TimeGrid& grid, const FdeSolution& with_claim,
                                  const FdeSolution& without_claim, const AssetPaths& paths, double lambda_value);

/// V^P = V^Q - sum <Z, n> dt on the paths the Q-solution lives on.
VProcess recover_V_under_P(const VProcess& V_Q, const ZFunctionalEval& Z_Q, const std::vector<Mat>& n,
                           const TimeGrid& grid);

/// Solution of the equation under the measure with drift-shift integrand
/// `shift`, on paths re-evolved from the same Brownian batch.
struct MeasureSolution {
  AssetPaths paths;
  FdeSolution fde;
  VProcess v_under_P;
};

MeasureSolution solve_fde_under_measure(const Scenario& scenario, const TimeGrid& grid,
                                        const BrownianBatch& brownian, double lambda_value, const DriftShift& shift,
                                        const std::vector<Standardization>& norms, const ConstantsLedger& ledger,
                                        const FdeOptions& options = {}, std::string measure_tag = "Q");

/// Block j of the lambda decomposition: solve the perturbed equation under
/// the measure with integrand n = -grad F(prior_Z).
struct PerturbedBlock {
  FdeSolution fde;       // on the block's Q-paths
  VProcess v_under_P;    // recovered on the Q-paths
  Mat v_on_P_paths;      // sum [F(p + Z) - F(p)] dt evaluated on the P-paths
};

PerturbedBlock solve_perturbed_fde(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                                   const AssetPaths& p_paths, const ConstantsLedger& ledger, std::size_t j,
                                   double lambda_j, const ZTable& prior_Z, const FdeOptions& options = {});

struct PerturbationResult {
  std::vector<double> lambda_split;
  Mat V_sum;  // sum of block V^P on the P-paths
  ZTable Z_sum;
  std::vector<IterationRecord> history;
  double max_ratio = 0.0;
  std::size_t blocks = 0;
};

/// Blocks 1..J in order, each under the measure induced by the accumulated Z.
PerturbationResult solve_perturbation_scheme(const Scenario& scenario, const TimeGrid& grid,
                                             const BrownianBatch& brownian, const AssetPaths& p_paths,
                                             const std::vector<Standardization>& norms, const ConstantsLedger& ledger,
                                             std::optional<std::size_t> split_override = std::nullopt,
                                             const FdeOptions& options = {});

/// mean(lambda g) + mean of the summed block V at maturity on the P-paths,
/// hedge from the summed Z table.
PricingResult price_perturbation(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& p_paths,
                                 const BrownianBatch& brownian, const PerturbationResult& result);

/// Sum_k [F(Z_k)] dt with Z evaluated from a table on the given paths.
Mat accumulate_driver(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths, const ZTable& table);

/// sqrt(mean over steps and paths of |Z_a - Z_b|^2), tables evaluated on `paths`.
double z_grid_distance(const ZTable& a, const ZTable& b, const AssetPaths& paths);

}  // namespace indiff
