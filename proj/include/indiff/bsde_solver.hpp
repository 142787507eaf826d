#pragma once

#include "indiff/errors.hpp"
#include "indiff/market_model.hpp"
#include "indiff/path_engine.hpp"
#include "indiff/regression.hpp"

#include <map>
#include <string>
#include <vector>

namespace indiff {

struct SolverOptions {
  BasisSpec basis;
  /// Z components are clipped at z_clip_factor * K2.
  double z_clip_factor = 10.0;
  bool clip_y = true;
  /// Add the propagated error terms to hedge targets. Off when only the
  /// coefficient tables are used.
  bool hedge_error = true;
};

/// Per-path, per-grid-time solution of the pricing equation for one lambda.
struct GridSolution {
  Mat Y;               // paths x (N + 1), clipped to the analytic bound
  std::vector<Mat> Z;  // N entries, paths x d
  Mat V;               // paths x (N + 1), running sum of F(Z) dt
  ZTable z_table;
  /// <sigma_P(t_k), raw Z regression target> per path; its dispersion gives
  /// standard errors for hedge and strategy means. Zero where Z is exactly 0.
  Mat hedge_target;  // paths x N
  /// Y_N + V_N per path; Y_0 is its sample mean.
  Vec y0_direct;
  /// Y_N + V_N - sum <Z, dW>: per-path reading of Y_0 with the martingale removed.
  Vec y0_pathwise;
  double lambda_used = 0.0;
  double theta_integral = 0.0;
  std::string measure_tag = "P";
  std::vector<std::size_t> clip_count;  // per grid time, Y and Z clips together
  std::size_t y_clips = 0;
  std::size_t z_clips = 0;

  std::size_t paths() const { return static_cast<std::size_t>(Y.rows()); }
  std::size_t steps() const { return Z.size(); }
};

struct PricingResult {
  std::string route;
  double price = 0.0;
  double price_stderr = 0.0;
  double y0_lambda = 0.0;
  double y0_zero = 0.0;
  double y0_lambda_stderr = 0.0;
  Mat hedge;              // paths x N
  Mat optimal_strategy;   // paths x N
  std::vector<double> hedge_mean, hedge_stderr;
  std::vector<double> strategy_mean, strategy_stderr;
  ConstantsLedger ledger;
  std::vector<IterationRecord> history;
  std::map<std::string, double> diagnostics;
};

/// Explicit backward regression scheme for the quadratic pricing BSDE on
/// P-paths. `regression` may carry projectors already built on `paths`.
GridSolution solve_bsde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                        const BrownianBatch& brownian, double lambda_value, const ConstantsLedger& ledger,
                        const SolverOptions& options = {}, const RegressionGrid* regression = nullptr);

/// Y_0^lambda - Y_0^0 with a standard error from the per-path readings.
PricingResult indifference_price(const GridSolution& sol_lambda, const GridSolution& sol_zero);

/// Price plus hedge -<sigma_P, Z^l - Z^0>/|sigma_P|^2 and optimal amount in
/// the index -<sigma_P, Z^l>/|sigma_P|^2 + mu_P/(gamma |sigma_P|^2).
PricingResult hedge_and_strategy(const Scenario& scenario, const TimeGrid& grid, const GridSolution& sol_lambda,
                                 const GridSolution& sol_zero);

/// Hedge and strategy columns with mean and standard error per grid time.
/// Without regression targets the standard error is the cross-path dispersion.
void fill_hedge_statistics(const Scenario& scenario, const TimeGrid& grid, const std::vector<Mat>& Z_lambda,
                           const std::vector<Mat>& Z_zero, const Mat& target_lambda, const Mat& target_zero,
                           PricingResult& r);

/// Both solves, price, hedge and strategy in one call.
PricingResult price_bsde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                         const BrownianBatch& brownian, const ConstantsLedger& ledger,
                         const SolverOptions& options = {}, const RegressionGrid* regression = nullptr);

/// Optimal amount held in the index, evaluated from a Z table on other paths.
Mat strategy_from_table(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                        const ZTable& z_table);

struct UtilityEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Certainty equivalent -(1/gamma) ln E[exp(-gamma (gains + lambda g))] of
/// holding pi_k (amount in the index) over step k, by log-sum-exp. With
/// `antithetic_pairs` rows i and M/2 + i are averaged before the standard error.
UtilityEstimate strategy_utility(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                                 const BrownianBatch& brownian, const Mat& pi, double lambda_value,
                                 bool antithetic_pairs = false);

/// Trading gains sum_k pi_k (mu_P dt + <sigma_P, dW>) per path.
Vec trading_gains(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian, const Mat& pi);

double sample_stderr(const Vec& x);

}  // namespace indiff
