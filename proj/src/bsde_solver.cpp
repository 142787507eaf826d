#include "indiff/bsde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace indiff {

double sample_stderr(const Vec& x) {
  const auto n = x.size();
  if (n < 2) return 0.0;
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

namespace {

bool constant_vector(const Vec& v) { return v.maxCoeff() == v.minCoeff(); }

}  // namespace

GridSolution solve_bsde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                        const BrownianBatch& brownian, double lambda_value, const ConstantsLedger& ledger,
                        const SolverOptions& options, const RegressionGrid* regression) {
  const std::size_t N = grid.steps();
  if (paths.steps() != N || brownian.steps() != N) throw DimensionError("paths, increments and grid disagree");
  if (paths.paths() != brownian.paths) throw DimensionError("paths and increments disagree on path count");
  if (regression != nullptr && regression->size() < N) throw DimensionError("regression grid too short");
  const auto M = static_cast<Eigen::Index>(paths.paths());
  const auto d = static_cast<Eigen::Index>(scenario.d);

  GridSolution sol;
  sol.lambda_used = lambda_value;
  sol.measure_tag = paths.measure_tag;
  sol.theta_integral = theta_integral(scenario, grid.times());
  sol.Y.resize(M, static_cast<Eigen::Index>(N + 1));
  sol.V = Mat::Zero(M, static_cast<Eigen::Index>(N + 1));
  sol.Z.assign(N, Mat());
  sol.hedge_target = Mat::Zero(M, static_cast<Eigen::Index>(N));
  sol.clip_count.assign(N + 1, 0);

  std::vector<Standardization> norms(N);
  for (std::size_t k = 0; k < N; ++k) {
    norms[k] = regression != nullptr ? (*regression)[k].standardization()
                                     : Standardization::from_state(regression_state(paths, k));
  }
  sol.z_table = ZTable::zeros(options.basis, norms, d);

  const Vec g = payoff_values(scenario, paths);
  sol.Y.col(static_cast<Eigen::Index>(N)) = (lambda_value * g).array() + sol.theta_integral;

  const double y_bound = lambda_value * scenario.payoff.g_max + scenario.T * ledger.theta_max;
  const double z_bound = options.z_clip_factor * ledger.K2;

  // The stored table is clipped to the analytic bound; the recursion carries
  // the unclipped fits, because clipping only the overshoot biases every
  // later conditional mean downward.
  Mat carry(M, static_cast<Eigen::Index>(N + 1));
  std::vector<std::optional<Projector>> locals(regression != nullptr ? 0 : N);
  std::vector<const Projector*> fitted_by(N, nullptr);
  carry.col(static_cast<Eigen::Index>(N)) = sol.Y.col(static_cast<Eigen::Index>(N));
  for (std::size_t k = N; k-- > 0;) {
    const auto kc = static_cast<Eigen::Index>(k);
    const Vec y_next = carry.col(kc + 1);
    const double dt = grid.dt(k);
    if (constant_vector(y_next)) {
      // F(0) = 0, so a deterministic continuation value just carries over.
      sol.Z[k] = Mat::Zero(M, d);
      sol.Y.col(kc) = sol.Y.col(kc + 1);
      carry.col(kc) = y_next;
      continue;
    }
    if (regression == nullptr) locals[k].emplace(regression_state(paths, k), options.basis, norms[k]);
    const Projector& proj = regression != nullptr ? (*regression)[k] : *locals[k];
    fitted_by[k] = &proj;

    const DriverAt drv = driver_at(scenario, grid.time(k));
    ZEstimate ze = estimate_Z(y_next, brownian.increments[k], dt, proj, z_bound);
    Vec f(M);
    drv.apply(ze.Z, f);
    const Vec y_fit = proj.project(y_next + f * dt);
    Vec y = y_fit;
    std::size_t clips = ze.clip_count;
    if (options.clip_y) clips += clip_abs(y, y_bound);
    if (!y_fit.allFinite()) {
      throw std::runtime_error("non-finite Y at grid time k = " + std::to_string(k) + " (t = " +
                               std::to_string(grid.time(k)) + ")");
    }
    sol.y_clips += clips - ze.clip_count;
    sol.z_clips += ze.clip_count;
    sol.clip_count[k] = clips;
    if (ze.targets.size() > 0) sol.hedge_target.col(kc) = ze.targets * drv.sigma_P;
    sol.z_table.coefficients[k] = std::move(ze.coefficients);
    sol.Z[k] = std::move(ze.Z);
    sol.Y.col(kc) = y;
    carry.col(kc) = y_fit;
  }

  Vec stoch = Vec::Zero(M);
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    const DriverAt drv = driver_at(scenario, grid.time(k));
    Vec f(M);
    drv.apply(sol.Z[k], f);
    sol.V.col(kc + 1) = sol.V.col(kc) + f * grid.dt(k);
    stoch += (sol.Z[k].array() * brownian.increments[k].array()).rowwise().sum().matrix();
  }
  sol.y0_direct = sol.Y.col(static_cast<Eigen::Index>(N)) + sol.V.col(static_cast<Eigen::Index>(N));
  sol.y0_pathwise = sol.y0_direct - stoch;

  // The fit at t_{k+1} absorbs noise that correlates with dW_k, so the
  // dispersion of raw targets alone understates the error of the mean hedge.
  Mat innovation = Mat::Zero(M, static_cast<Eigen::Index>(N));
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    if (fitted_by[k] != nullptr) {
      innovation.col(kc) = carry.col(kc + 1) + sol.V.col(kc + 1) - sol.V.col(kc) - carry.col(kc);
    }
  }
  std::vector<Vec> direction(N);
  std::vector<double> steps(N);
  for (std::size_t k = 0; k < N; ++k) {
    steps[k] = grid.dt(k);
    if (!(sol.hedge_target.col(static_cast<Eigen::Index>(k)).array() == 0.0).all()) {
      direction[k] = brownian.increments[k] * driver_at(scenario, grid.time(k)).sigma_P;
    }
  }
  add_propagated_error(sol.hedge_target, direction, innovation, fitted_by, steps);
  return sol;
}

PricingResult indifference_price(const GridSolution& sol_lambda, const GridSolution& sol_zero) {
  if (sol_lambda.Y.rows() != sol_zero.Y.rows() || sol_lambda.Y.cols() != sol_zero.Y.cols()) {
    throw DimensionError("solutions live on different grids or path sets");
  }
  PricingResult r;
  r.route = "bsde";
  r.y0_lambda = sol_lambda.Y.col(0).mean();
  r.y0_zero = sol_zero.Y.col(0).mean();
  r.price = r.y0_lambda - r.y0_zero;
  // Projections keep sample means, so Y_0 is the mean of Y_N + V_N and its
  // error is that quantity's dispersion; the martingale-corrected reading is
  // far less dispersed but not what the price averages.
  r.price_stderr = sample_stderr(sol_lambda.y0_direct - sol_zero.y0_direct);
  r.y0_lambda_stderr = sample_stderr(sol_lambda.y0_direct);
  r.diagnostics["control_variate_stderr"] = sample_stderr(sol_lambda.y0_pathwise - sol_zero.y0_pathwise);
  r.diagnostics["y_clips"] = static_cast<double>(sol_lambda.y_clips + sol_zero.y_clips);
  r.diagnostics["z_clips"] = static_cast<double>(sol_lambda.z_clips + sol_zero.z_clips);
  return r;
}

void fill_hedge_statistics(const Scenario& scenario, const TimeGrid& grid, const std::vector<Mat>& Z_lambda,
                           const std::vector<Mat>& Z_zero, const Mat& target_lambda, const Mat& target_zero,
                           PricingResult& r) {
  const std::size_t N = grid.steps();
  if (Z_lambda.size() != N || Z_zero.size() != N) throw DimensionError("Z sequences do not match the grid");
  const auto M = Z_lambda.front().rows();
  const bool have_targets = target_lambda.size() > 0 && target_zero.size() > 0;
  r.hedge.resize(M, static_cast<Eigen::Index>(N));
  r.optimal_strategy.resize(M, static_cast<Eigen::Index>(N));
  r.hedge_mean.clear();
  r.hedge_stderr.clear();
  r.strategy_mean.clear();
  r.strategy_stderr.clear();
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    const DriverAt drv = driver_at(scenario, grid.time(k));
    const double s2 = drv.sigma_norm2;
    const Vec a_lambda = Z_lambda[k] * drv.sigma_P;
    const Vec a_zero = Z_zero[k] * drv.sigma_P;
    r.hedge.col(kc) = -(a_lambda - a_zero) / s2;
    r.optimal_strategy.col(kc) = (-a_lambda / s2).array() + drv.mu_P / (drv.gamma * s2);
    r.hedge_mean.push_back(r.hedge.col(kc).mean());
    r.strategy_mean.push_back(r.optimal_strategy.col(kc).mean());
    if (have_targets) {
      // The fitted mean equals the mean of the regression target; the targets
      // carry the pathwise residual so their dispersion covers later fits.
      const Vec diff = target_lambda.col(kc) - target_zero.col(kc);
      r.hedge_stderr.push_back(sample_stderr(diff) / s2);
      r.strategy_stderr.push_back(sample_stderr(target_lambda.col(kc)) / s2);
    } else {
      r.hedge_stderr.push_back(sample_stderr(r.hedge.col(kc)));
      r.strategy_stderr.push_back(sample_stderr(r.optimal_strategy.col(kc)));
    }
  }
}

PricingResult hedge_and_strategy(const Scenario& scenario, const TimeGrid& grid, const GridSolution& sol_lambda,
                                 const GridSolution& sol_zero) {
  PricingResult r = indifference_price(sol_lambda, sol_zero);
  fill_hedge_statistics(scenario, grid, sol_lambda.Z, sol_zero.Z, sol_lambda.hedge_target, sol_zero.hedge_target, r);
  return r;
}

PricingResult price_bsde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                         const BrownianBatch& brownian, const ConstantsLedger& ledger, const SolverOptions& options,
                         const RegressionGrid* regression) {
  const GridSolution lam = solve_bsde(scenario, grid, paths, brownian, scenario.lambda, ledger, options, regression);
  const GridSolution zero = solve_bsde(scenario, grid, paths, brownian, 0.0, ledger, options, regression);
  PricingResult r = hedge_and_strategy(scenario, grid, lam, zero);
  r.ledger = ledger;
  return r;
}

Mat strategy_from_table(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                        const ZTable& z_table) {
  const std::size_t N = grid.steps();
  if (z_table.steps() != N || paths.steps() != N) throw DimensionError("Z table and paths disagree on grid");
  Mat pi(static_cast<Eigen::Index>(paths.paths()), static_cast<Eigen::Index>(N));
  for (std::size_t k = 0; k < N; ++k) {
    const DriverAt drv = driver_at(scenario, grid.time(k));
    const Mat Z = z_table.evaluate(k, regression_state(paths, k));
    pi.col(static_cast<Eigen::Index>(k)) =
        (-(Z * drv.sigma_P) / drv.sigma_norm2).array() + drv.mu_P / (drv.gamma * drv.sigma_norm2);
  }
  return pi;
}

Vec trading_gains(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian, const Mat& pi) {
  const std::size_t N = grid.steps();
  const auto M = static_cast<Eigen::Index>(brownian.paths);
  if (pi.rows() != M || pi.cols() != static_cast<Eigen::Index>(N)) throw DimensionError("strategy must be paths x N");
  if (!pi.allFinite()) throw std::invalid_argument("strategy is not finite");
  Vec gains = Vec::Zero(M);
  for (std::size_t k = 0; k < N; ++k) {
    const double t = grid.time(k);
    const Vec& sig = scenario.sigma_P(t);
    const Vec inc = (brownian.increments[k] * sig).array() + scenario.mu_P(t) * grid.dt(k);
    gains.array() += pi.col(static_cast<Eigen::Index>(k)).array() * inc.array();
  }
  return gains;
}

UtilityEstimate strategy_utility(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                                 const BrownianBatch& brownian, const Mat& pi, double lambda_value,
                                 bool antithetic_pairs) {
  const Vec gains = trading_gains(scenario, grid, brownian, pi);
  const Vec g = payoff_values(scenario, paths);
  const double gamma = scenario.gamma;
  const Vec x = -gamma * (gains + lambda_value * g);
  const double c = x.maxCoeff();
  const Vec w = (x.array() - c).exp().matrix();
  const double wbar = w.mean();
  UtilityEstimate u;
  u.value = -(c + std::log(wbar)) / gamma;
  if (antithetic_pairs) {
    if (w.size() % 2 != 0) throw DimensionError("antithetic batch needs an even path count");
    const Eigen::Index h = w.size() / 2;
    u.standard_error = sample_stderr(0.5 * (w.head(h) + w.tail(h))) / (wbar * gamma);
  } else {
    u.standard_error = sample_stderr(w) / (wbar * gamma);
  }
  return u;
}

}  // namespace indiff
