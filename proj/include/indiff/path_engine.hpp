#pragma once

#include "indiff/market_model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace indiff {

/// Time grid 0 = t_0 < ... < t_N = T. Spacing is uniform inside each block;
/// block boundaries are grid points.
class TimeGrid {
 public:
  static TimeGrid uniform(double T, std::size_t steps);
  /// Spreads `steps` as evenly as possible over the blocks given by
  /// `boundaries` (0 = b_0 < ... < b_J = T); every block gets at least one step.
  static TimeGrid blocked(std::span<const double> boundaries, std::size_t steps);

  std::size_t steps() const { return times_.size() - 1; }
  double horizon() const { return times_.back(); }
  double time(std::size_t k) const { return times_[k]; }
  double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
  const std::vector<double>& times() const { return times_; }
  /// Grid indices of the block boundaries, starting with 0 and ending with N.
  const std::vector<std::size_t>& block_starts() const { return block_starts_; }
  std::size_t blocks() const { return block_starts_.size() - 1; }

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> times_;
  std::vector<std::size_t> block_starts_;
};

/// Gaussian increments, one M x d matrix per step.
struct BrownianBatch {
  std::size_t paths = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<Mat> increments;

  std::size_t steps() const { return increments.size(); }
  /// Path i draws from stream i.
  static std::uint64_t stream_id(std::size_t path) { return path; }
};

/// Deterministic in (grid, dim, paths, seed); `workers` only changes wall time.
BrownianBatch simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths, std::uint64_t seed,
                                unsigned workers = 1);

/// 2 * pairs paths: the first half as simulate_brownian draws them, row
/// pairs + i the negation of row i.
BrownianBatch antithetic_brownian(const TimeGrid& grid, std::size_t dim, std::size_t pairs, std::uint64_t seed);

/// Integrand n_k of the measure-defining martingale at step k given the
/// regression state at t_k (log-prices, then monitor columns). May return a
/// single row, which is broadcast to all paths.
using DriftShift = std::function<Mat(std::size_t k, const Mat& state)>;

/// Log prices (positivity is structural), index log price and any running
/// statistics the payoff monitors.
struct AssetPaths {
  std::vector<Mat> log_s;  // N + 1 entries, M x d
  Mat log_p;               // M x (N + 1)
  std::vector<Mat> aux;    // N + 1 entries, M x aux_dim; empty without a monitor
  std::vector<Mat> shift;  // N entries when recorded
  std::string measure_tag = "P";

  std::size_t paths() const { return log_s.empty() ? 0 : static_cast<std::size_t>(log_s.front().rows()); }
  std::size_t steps() const { return log_s.empty() ? 0 : log_s.size() - 1; }
  Mat prices(std::size_t k) const { return log_s[k].array().exp().matrix(); }
};

/// One exact log-Euler step for every row of `log_s`: ln S^i advances by
/// (mu^i - |sigma^i|^2 / 2 - <sigma^i, shift>) dt + <sigma^i, dW>.
Mat log_step(const Scenario& scenario, double t, double dt, const Mat& log_s, const Mat& dW,
             const Mat* shift = nullptr);

AssetPaths evolve_assets(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                         const DriftShift& shift = {}, std::string measure_tag = "P", bool record_shift = false);

/// Regression features at grid time k: log prices followed by monitor state.
Mat regression_state(const AssetPaths& paths, std::size_t k);

/// g evaluated per path at maturity (lambda not applied).
Vec payoff_values(const Scenario& scenario, const AssetPaths& paths);

/// Runs the payoff monitor along paths from a given time index onward.
void update_monitor(const Scenario& scenario, std::size_t k, std::size_t steps, const Mat& log_s, Mat& aux);

struct MeasureChange {
  std::vector<Mat> integrand;  // per step, M x d (or 1 x d broadcast)
  Mat weights;                 // M x (N + 1), Doleans-Dade exponential
  double bmo_estimate = 0.0;   // max over grid and paths of remaining sum |h|^2 dt
};

MeasureChange doleans_weights(std::vector<Mat> integrand, const BrownianBatch& brownian, const TimeGrid& grid);

/// Debug dump: three little-endian uint64 (M, N, d), then S in path-major
/// order (M x (N+1) x d), then P (M x (N+1)), all little-endian doubles.
void write_paths_binary(const std::filesystem::path& file, const AssetPaths& paths);

}  // namespace indiff
