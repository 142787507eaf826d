#pragma once

#include "indiff/bsde_solver.hpp"

#include <functional>
#include <vector>

namespace indiff {

/// Uniform blocks of [0, T] short enough for the forward Picard map to contract.
struct BlockPartition {
  std::vector<double> boundaries;  // t_0 = 0 < ... < t_J = T
  double max_delta = 0.0;
  double bound = 0.0;  // 1 / (8 K3^2 K4), infinite when K3 K4 = 0

  std::size_t blocks() const { return boundaries.size() - 1; }
};

/// Throws ScenarioError("A4") when the payoff carries no log-Lipschitz data.
BlockPartition build_partition(const ConstantsLedger& ledger, double T);

/// Grid with `steps` steps whose block boundaries are the partition points.
TimeGrid partition_grid(const BlockPartition& partition, std::size_t steps);

/// Row-wise integrand of the measure under which the driver vanishes:
/// (gamma/2) Z - (gamma / (2 |sigma_P|^2)) (<sigma_P, Z> - 2 mu_P / gamma) sigma_P.
Mat nonlinear_measure_integrand(const DriverAt& drv, const Mat& Z);

/// Value x -> Y(t_j, e^x) at every partition point, as regression
/// coefficients on log prices; exact at maturity.
struct ValueFunctionTable {
  std::vector<double> times;
  BasisSpec basis;
  std::vector<Standardization> norms;  // boundaries 0..J-1
  std::vector<Vec> coefficients;       // boundaries 0..J-1
  std::vector<double> lipschitz;       // boundaries 0..J, payoff constant at J
  double lipschitz_estimate = 0.0;
  std::function<Vec(const Mat& log_s)> terminal;

  std::size_t blocks() const { return times.size() - 1; }
  Vec evaluate(std::size_t j, const Mat& log_s) const;
};

struct GirsanovOptions {
  double tol = 1e-5;
  std::size_t max_iter = 25;
  std::size_t min_iter = 3;
  std::size_t stall_limit = 3;
  double vanish_tol = 1e-3;
  /// Fraction of states dropped in each tail of every coordinate before the
  /// Lipschitz estimate of a fitted value function.
  double lipschitz_trim = 0.01;
  SolverOptions solver;
};

/// Converged forward process on one block together with its measure.
struct ForwardBlock {
  std::size_t block = 0;
  std::size_t first_step = 0;
  std::vector<Mat> log_s;  // steps in block + 1 entries
  std::vector<Mat> Z;      // per step in block, paths x d
  std::vector<Mat> n;      // integrand of the measure, paths x d
  std::vector<Standardization> norms;
  std::vector<Mat> z_coefficients;
  Standardization start_norm;
  Vec start_coefficients;
  std::vector<IterationRecord> history;
  double vanish_residual = 0.0;
};

/// Picard iteration X(m) -> Z -> n(Z) -> X(m+1) on block j (1-based) of the
/// grid, started from `start_log_s` with the minimal martingale drift.
ForwardBlock iterate_forward_block(const Scenario& scenario, const TimeGrid& grid, std::size_t j,
                                   const Mat& start_log_s, const ValueFunctionTable& value_next,
                                   const BrownianBatch& brownian, const ConstantsLedger& ledger,
                                   const GirsanovOptions& options = {});

/// sqrt(mean over paths of max over times of |X_a - X_b|^2).
double sampled_s_norm(const std::vector<Mat>& a, const std::vector<Mat>& b);

struct GirsanovResult {
  PricingResult pricing;
  ValueFunctionTable values;
  ZTable z_table;
  BlockPartition partition;
  std::vector<IterationRecord> history;
  double max_ratio = 0.0;
  double vanish_residual = 0.0;       // mean |F(Z) + <Z, n>| per step, worst step, on the Q-paths
  double v_q_norm = 0.0;              // sampled V-norm of V^Q on the Q-paths
  double value_table_price = 0.0;     // Y(t_0, S_0) - int theta
  double q_terminal_mean = 0.0;       // mean of lambda g + int theta under the converged Q
  double q_terminal_stderr = 0.0;
};

/// Blocks J..1 backward, then V^P = sum F(Z) dt on P-paths and the pseudo-linear price.
/// The grid must carry the partition's block boundaries (see partition_grid).
GirsanovResult solve_nonlinear_girsanov(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                                        double lambda_value, const ConstantsLedger& ledger,
                                        const GirsanovOptions& options = {});

}  // namespace indiff
