#include "indiff/fde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace indiff {

namespace {

bool constant_vector(const Vec& v) { return v.maxCoeff() == v.minCoeff(); }

std::vector<DriverAt> drivers_on(const Scenario& scenario, const TimeGrid& grid) {
  std::vector<DriverAt> out;
  out.reserve(grid.steps());
  for (std::size_t k = 0; k < grid.steps(); ++k) out.push_back(driver_at(scenario, grid.time(k)));
  return out;
}

Vec row_dot(const Mat& a, const Mat& b) {
  if (b.rows() == 1) return a * b.row(0).transpose();
  return (a.array() * b.array()).rowwise().sum().matrix();
}

Mat integrate_driver(const StepDriver& driver, const std::vector<Mat>& Z, const TimeGrid& grid) {
  const std::size_t N = grid.steps();
  const auto M = Z.front().rows();
  Mat V = Mat::Zero(M, static_cast<Eigen::Index>(N + 1));
  Vec f(M);
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    driver(k, Z[k], f);
    V.col(kc + 1) = V.col(kc) + f * grid.dt(k);
  }
  return V;
}

PricingResult pseudo_linear_result(const Vec& claim, const Vec& vT_lambda, const Vec& vT_zero, const Vec& stoch_lambda,
                                   const Vec& stoch_zero) {
  PricingResult r;
  r.price = claim.mean() + vT_lambda.mean() - vT_zero.mean();
  r.price_stderr = sample_stderr(claim + vT_lambda - vT_zero);
  r.diagnostics["control_variate_stderr"] = sample_stderr(claim + vT_lambda - vT_zero - stoch_lambda + stoch_zero);
  return r;
}

}  // namespace

double sampled_v_norm(const Mat& V) {
  if (V.cols() == 0 || V.rows() == 0) return 0.0;
  const Vec vT = V.col(V.cols() - 1);
  double best = 0.0;
  for (Eigen::Index k = 0; k < V.cols(); ++k) best = std::max(best, (vT - V.col(k)).cwiseAbs().mean());
  return best;
}

StepDriver pricing_driver(const Scenario& scenario, const TimeGrid& grid) {
  return [drv = drivers_on(scenario, grid)](std::size_t k, const Mat& Z, Eigen::Ref<Vec> out) {
    drv[k].apply(Z, out);
  };
}

StepDriver shifted_driver(const Scenario& scenario, const TimeGrid& grid, const std::vector<Mat>& n) {
  if (n.size() != grid.steps()) throw DimensionError("shift integrand does not cover the grid");
  return [drv = drivers_on(scenario, grid), &n](std::size_t k, const Mat& Z, Eigen::Ref<Vec> out) {
    drv[k].apply(Z, out);
    out += row_dot(Z, n[k]);
  };
}

StepDriver perturbed_driver(const Scenario& scenario, const TimeGrid& grid) {
  return [drv = drivers_on(scenario, grid)](std::size_t k, const Mat& Z, Eigen::Ref<Vec> out) {
    const DriverAt& d = drv[k];
    const Vec a = Z * d.sigma_P;
    out = (-0.5 * d.gamma) * Z.rowwise().squaredNorm() + ((0.5 * d.gamma / d.sigma_norm2) * a.array().square()).matrix();
  };
}

ZFunctionalEval z_functional(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, const Mat& V, double lambda_value,
                             double terminal_scale, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const SolverOptions& options) {
  const std::size_t N = grid.steps();
  if (paths.steps() != N || brownian.steps() != N || regression.size() < N) {
    throw DimensionError("paths, increments, regression grid and time grid disagree");
  }
  const auto M = static_cast<Eigen::Index>(paths.paths());
  if (V.rows() != M || V.cols() != static_cast<Eigen::Index>(N + 1)) throw DimensionError("V must be paths x (N + 1)");
  const auto d = static_cast<Eigen::Index>(scenario.d);

  ZFunctionalEval out;
  out.Z.assign(N, Mat());
  out.table = ZTable::zeros(options.basis, standardizations(regression), d);
  out.hedge_target = Mat::Zero(M, static_cast<Eigen::Index>(N));
  out.stoch_integral = Vec::Zero(M);

  const double z_bound = options.z_clip_factor * ledger.K2;
  Vec U = terminal_scale * ((lambda_value * payoff_values(scenario, paths)).array() +
                            theta_integral(scenario, grid.times())).matrix();
  Mat innovation = Mat::Zero(M, static_cast<Eigen::Index>(N));
  std::vector<const Projector*> fitted_by(N, nullptr);
  std::vector<Vec> direction(N);
  std::vector<double> steps(N);
  for (std::size_t k = N; k-- > 0;) {
    const auto kc = static_cast<Eigen::Index>(k);
    const Vec next = U + (V.col(kc + 1) - V.col(kc));
    if (constant_vector(next)) {
      out.Z[k] = Mat::Zero(M, d);
      U = next;
      continue;
    }
    const Projector& proj = regression[k];
    ZEstimate ze = estimate_Z(next, brownian.increments[k], grid.dt(k), proj, z_bound);
    out.clip_count += ze.clip_count;
    if (ze.targets.size() > 0) {
      out.hedge_target.col(kc) = ze.targets * scenario.sigma_P(grid.time(k));
      direction[k] = brownian.increments[k] * scenario.sigma_P(grid.time(k));
    }
    out.stoch_integral += row_dot(ze.Z, brownian.increments[k]);
    out.table.coefficients[k] = std::move(ze.coefficients);
    out.Z[k] = std::move(ze.Z);
    U = proj.project(next);
    if (!U.allFinite()) throw std::runtime_error("non-finite continuation value at k = " + std::to_string(k));
    innovation.col(kc) = next - U;
    fitted_by[k] = &proj;
  }
  if (options.hedge_error) {
    for (std::size_t k = 0; k < N; ++k) steps[k] = grid.dt(k);
    add_propagated_error(out.hedge_target, direction, innovation, fitted_by, steps);
  }
  return out;
}

FdeSolution picard_solve_fde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, double lambda_value, const StepDriver& driver,
                             double terminal_scale, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const FdeOptions& options, std::size_t block) {
  const PicardOptions& po = options.picard;
  const auto M = static_cast<Eigen::Index>(paths.paths());
  FdeSolution sol;
  Mat V = Mat::Zero(M, static_cast<Eigen::Index>(grid.steps() + 1));
  double prev = 0.0;
  std::size_t stalls = 0;
  for (std::size_t m = 1; m <= po.max_iter; ++m) {
    sol.z = z_functional(scenario, grid, paths, brownian, V, lambda_value, terminal_scale, regression, ledger,
                         options.solver);
    Mat next = integrate_driver(driver, sol.z.Z, grid);
    const double diff = sampled_v_norm(next - V);
    const double ratio = (m == 1 || prev == 0.0) ? 0.0 : diff / prev;
    sol.v.history.push_back({block, m, diff, ratio, 0.0});
    if (!next.allFinite() || !std::isfinite(diff)) {
      throw ConvergenceError("Picard sweep produced non-finite values", sol.v.history);
    }
    stalls = ratio >= 1.0 ? stalls + 1 : 0;
    if (stalls >= po.stall_limit) {
      throw ConvergenceError("Picard iteration stopped contracting: ratio >= 1 on " + std::to_string(stalls) +
                                 " consecutive sweeps",
                             sol.v.history);
    }
    V = std::move(next);
    prev = diff;
    sol.v.fixed_point_residual = diff;
    if (diff <= po.tol && m >= po.min_iter) {
      sol.v.converged = true;
      break;
    }
    if (diff == 0.0) {
      sol.v.converged = true;
      break;
    }
  }
  sol.v.V = std::move(V);
  sol.v.norm_V = sampled_v_norm(sol.v.V);
  return sol;
}

FdeSolution picard_solve_fde(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths,
                             const BrownianBatch& brownian, double lambda_value, const RegressionGrid& regression,
                             const ConstantsLedger& ledger, const FdeOptions& options) {
  return picard_solve_fde(scenario, grid, paths, brownian, lambda_value, pricing_driver(scenario, grid), 1.0,
                          regression, ledger, options);
}

PricingResult price_pseudo_linear(const Scenario& scenario, const TimeGrid& grid, const FdeSolution& with_claim,
                                  const FdeSolution& without_claim, const AssetPaths& paths, double lambda_value) {
  const auto N = static_cast<Eigen::Index>(grid.steps());
  const Vec claim = lambda_value * payoff_values(scenario, paths);
  PricingResult r = pseudo_linear_result(claim, with_claim.v.V.col(N), without_claim.v.V.col(N),
                                         with_claim.z.stoch_integral, without_claim.z.stoch_integral);
  r.route = "fde";
  r.y0_lambda = r.price;
  r.y0_zero = 0.0;
  fill_hedge_statistics(scenario, grid, with_claim.z.Z, without_claim.z.Z, with_claim.z.hedge_target,
                        without_claim.z.hedge_target, r);
  r.history = with_claim.v.history;
  r.diagnostics["picard_iterations"] = static_cast<double>(with_claim.v.history.size());
  r.diagnostics["fixed_point_residual"] = with_claim.v.fixed_point_residual;
  r.diagnostics["norm_V"] = with_claim.v.norm_V;
  r.diagnostics["z_clips"] = static_cast<double>(with_claim.z.clip_count + without_claim.z.clip_count);
  return r;
}

VProcess recover_V_under_P(const VProcess& V_Q, const ZFunctionalEval& Z_Q, const std::vector<Mat>& n,
                           const TimeGrid& grid) {
  const std::size_t N = grid.steps();
  if (n.size() != N || Z_Q.Z.size() != N) throw DimensionError("integrand and Z must cover the grid");
  VProcess out;
  out.V = V_Q.V;
  Vec acc = Vec::Zero(out.V.rows());
  for (std::size_t k = 0; k < N; ++k) {
    acc += row_dot(Z_Q.Z[k], n[k]) * grid.dt(k);
    out.V.col(static_cast<Eigen::Index>(k + 1)) -= acc;
  }
  out.norm_V = sampled_v_norm(out.V);
  out.converged = V_Q.converged;
  out.fixed_point_residual = V_Q.fixed_point_residual;
  return out;
}

MeasureSolution solve_fde_under_measure(const Scenario& scenario, const TimeGrid& grid,
                                        const BrownianBatch& brownian, double lambda_value, const DriftShift& shift,
                                        const std::vector<Standardization>& norms, const ConstantsLedger& ledger,
                                        const FdeOptions& options, std::string measure_tag) {
  MeasureSolution out;
  out.paths = evolve_assets(scenario, grid, brownian, shift, std::move(measure_tag), true);
  const RegressionGrid reg = build_regression_grid(out.paths, options.solver.basis, &norms);
  out.fde = picard_solve_fde(scenario, grid, out.paths, brownian, lambda_value,
                             shifted_driver(scenario, grid, out.paths.shift), 1.0, reg, ledger, options);
  out.v_under_P = recover_V_under_P(out.fde.v, out.fde.z, out.paths.shift, grid);
  return out;
}

PerturbedBlock solve_perturbed_fde(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                                   const AssetPaths& p_paths, const ConstantsLedger& ledger, std::size_t j,
                                   double lambda_j, const ZTable& prior_Z, const FdeOptions& options) {
  const std::size_t N = grid.steps();
  if (prior_Z.steps() != N) throw DimensionError("prior Z table does not cover the grid");
  const std::vector<DriverAt> drv = drivers_on(scenario, grid);
  const DriftShift shift = [&](std::size_t k, const Mat& state) -> Mat {
    return -drv[k].grad_rows(prior_Z.evaluate(k, state));
  };
  const AssetPaths q = evolve_assets(scenario, grid, brownian, shift, "Q" + std::to_string(j), true);
  const RegressionGrid reg = build_regression_grid(q, options.solver.basis, &prior_Z.norms);
  const double scale = scenario.lambda != 0.0 ? lambda_j / scenario.lambda : 0.0;

  PerturbedBlock out;
  out.fde = picard_solve_fde(scenario, grid, q, brownian, scenario.lambda, perturbed_driver(scenario, grid), scale,
                             reg, ledger, options, j);
  out.v_under_P = recover_V_under_P(out.fde.v, out.fde.z, q.shift, grid);

  const auto M = static_cast<Eigen::Index>(p_paths.paths());
  out.v_on_P_paths = Mat::Zero(M, static_cast<Eigen::Index>(N + 1));
  Vec f_full(M), f_prior(M);
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    const Mat state = regression_state(p_paths, k);
    const Mat p = prior_Z.evaluate(k, state);
    drv[k].apply(p + out.fde.z.table.evaluate(k, state), f_full);
    drv[k].apply(p, f_prior);
    out.v_on_P_paths.col(kc + 1) = out.v_on_P_paths.col(kc) + (f_full - f_prior) * grid.dt(k);
  }
  return out;
}

PerturbationResult solve_perturbation_scheme(const Scenario& scenario, const TimeGrid& grid,
                                             const BrownianBatch& brownian, const AssetPaths& p_paths,
                                             const std::vector<Standardization>& norms, const ConstantsLedger& ledger,
                                             std::optional<std::size_t> split_override, const FdeOptions& options) {
  const std::size_t N = grid.steps();
  PerturbationResult out;
  out.lambda_split = split_lambda(ledger, scenario.lambda, split_override);
  out.Z_sum = ZTable::zeros(options.solver.basis, norms, scenario.d);
  out.V_sum = Mat::Zero(static_cast<Eigen::Index>(p_paths.paths()), static_cast<Eigen::Index>(N + 1));
  if (scenario.lambda == 0.0) return out;

  for (std::size_t j = 0; j < out.lambda_split.size(); ++j) {
    FdeOptions block_opts = options;
    const double share = std::abs(out.lambda_split[j] / scenario.lambda);
    block_opts.picard.tol = options.picard.tol * share;
    block_opts.picard.min_iter = std::max<std::size_t>(options.picard.min_iter, 3);
    block_opts.solver.hedge_error = false;
    PerturbedBlock b =
        solve_perturbed_fde(scenario, grid, brownian, p_paths, ledger, j + 1, out.lambda_split[j], out.Z_sum, block_opts);
    for (const IterationRecord& rec : b.fde.v.history) out.max_ratio = std::max(out.max_ratio, rec.ratio);
    out.history.insert(out.history.end(), b.fde.v.history.begin(), b.fde.v.history.end());
    out.V_sum += b.v_on_P_paths;
    out.Z_sum += b.fde.z.table;
    ++out.blocks;
  }
  return out;
}

PricingResult price_perturbation(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& p_paths,
                                 const BrownianBatch& brownian, const PerturbationResult& result) {
  const std::size_t N = grid.steps();
  const auto M = static_cast<Eigen::Index>(p_paths.paths());
  std::vector<Mat> Z(N), zero(N, Mat::Zero(M, scenario.d));
  Vec stoch = Vec::Zero(M);
  for (std::size_t k = 0; k < N; ++k) {
    Z[k] = result.Z_sum.evaluate(k, regression_state(p_paths, k));
    stoch += row_dot(Z[k], brownian.increments[k]);
  }
  const Vec claim = scenario.lambda * payoff_values(scenario, p_paths);
  const Vec none = Vec::Zero(M);
  PricingResult r = pseudo_linear_result(claim, result.V_sum.col(static_cast<Eigen::Index>(N)), none, stoch, none);
  r.route = "perturbation";
  r.y0_lambda = r.price;
  fill_hedge_statistics(scenario, grid, Z, zero, Mat(), Mat(), r);
  r.history = result.history;
  r.diagnostics["blocks"] = static_cast<double>(result.blocks);
  r.diagnostics["max_ratio"] = result.max_ratio;
  return r;
}

Mat accumulate_driver(const Scenario& scenario, const TimeGrid& grid, const AssetPaths& paths, const ZTable& table) {
  const std::size_t N = grid.steps();
  if (table.steps() != N || paths.steps() != N) throw DimensionError("Z table and paths disagree on grid");
  const auto M = static_cast<Eigen::Index>(paths.paths());
  Mat V = Mat::Zero(M, static_cast<Eigen::Index>(N + 1));
  Vec f(M);
  for (std::size_t k = 0; k < N; ++k) {
    const auto kc = static_cast<Eigen::Index>(k);
    driver_at(scenario, grid.time(k)).apply(table.evaluate(k, regression_state(paths, k)), f);
    V.col(kc + 1) = V.col(kc) + f * grid.dt(k);
  }
  return V;
}

double z_grid_distance(const ZTable& a, const ZTable& b, const AssetPaths& paths) {
  if (a.steps() != b.steps() || a.steps() != paths.steps()) throw DimensionError("Z tables disagree on grid");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.steps(); ++k) {
    const Mat state = regression_state(paths, k);
    acc += (a.evaluate(k, state) - b.evaluate(k, state)).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(a.steps() * paths.paths()));
}

}  // namespace indiff
