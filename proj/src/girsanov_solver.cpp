#include "indiff/girsanov_solver.hpp"

#include "indiff/fde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace indiff {

namespace {

bool constant_vector(const Vec& v) { return v.maxCoeff() == v.minCoeff(); }

Vec row_dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).rowwise().sum().matrix(); }

std::vector<Mat> evolve_block(const Scenario& scenario, const TimeGrid& grid, std::size_t first, std::size_t steps,
                              const Mat& start, const BrownianBatch& brownian, const std::vector<Mat>& n) {
  std::vector<Mat> X(steps + 1);
  X[0] = start;
  for (std::size_t l = 0; l < steps; ++l) {
    const std::size_t k = first + l;
    X[l + 1] = log_step(scenario, grid.time(k), grid.dt(k), X[l], brownian.increments[k], &n[l]);
  }
  return X;
}

/// Largest sup-norm gradient of a fitted value over the central part of the sample.
double lipschitz_of_fit(const Projector& proj, const Vec& coef, const Mat& states, double trim) {
  const auto M = states.rows();
  const auto d = states.cols();
  std::vector<bool> keep(static_cast<std::size_t>(M), true);
  for (Eigen::Index c = 0; c < d; ++c) {
    std::vector<double> col(states.col(c).data(), states.col(c).data() + M);
    std::sort(col.begin(), col.end());
    const auto lo_i = static_cast<std::size_t>(trim * static_cast<double>(M - 1));
    const double lo = col[lo_i];
    const double hi = col[static_cast<std::size_t>(M - 1) - lo_i];
    for (Eigen::Index i = 0; i < M; ++i) {
      if (states(i, c) < lo || states(i, c) > hi) keep[static_cast<std::size_t>(i)] = false;
    }
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < M; ++i)
    if (keep[static_cast<std::size_t>(i)]) rows.push_back(i);
  if (rows.empty()) return 0.0;
  Mat sample(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) sample.row(static_cast<Eigen::Index>(r)) = states.row(rows[r]);
  const double h = 1e-4;
  Vec worst = Vec::Zero(sample.rows());
  for (Eigen::Index c = 0; c < d; ++c) {
    Mat up = sample, down = sample;
    up.col(c).array() += h;
    down.col(c).array() -= h;
    const Vec grad = (proj.evaluate(coef, up) - proj.evaluate(coef, down)).col(0) / (2.0 * h);
    worst = worst.cwiseMax(grad.cwiseAbs());
  }
  return worst.maxCoeff();
}

}  // namespace

BlockPartition build_partition(const ConstantsLedger& ledger, double T) {
  if (!ledger.K3) {
    throw ScenarioError("A4", "the forward-block route needs a payoff with log-Lipschitz data (lipschitz_log)");
  }
  BlockPartition p;
  p.bound = ledger.partition_bound;
  p.boundaries = ledger.partition;
  if (p.boundaries.size() < 2) p.boundaries = {0.0, T};
  for (std::size_t j = 0; j + 1 < p.boundaries.size(); ++j) {
    p.max_delta = std::max(p.max_delta, p.boundaries[j + 1] - p.boundaries[j]);
  }
  return p;
}

TimeGrid partition_grid(const BlockPartition& partition, std::size_t steps) {
  return TimeGrid::blocked(partition.boundaries, steps);
}

Mat nonlinear_measure_integrand(const DriverAt& drv, const Mat& Z) {
  const Vec a = Z * drv.sigma_P;
  const Vec coef = (drv.gamma / (2.0 * drv.sigma_norm2)) * (a.array() - 2.0 * drv.mu_P / drv.gamma).matrix();
  return (0.5 * drv.gamma) * Z - coef * drv.sigma_P.transpose();
}

Vec ValueFunctionTable::evaluate(std::size_t j, const Mat& log_s) const {
  if (j == blocks()) return terminal(log_s);
  const PolynomialBasis b(norms[j].features(), basis);
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < b.size(); ++c) {
    if (coefficients[j](static_cast<Eigen::Index>(c)) != 0.0) cols.push_back(c);
  }
  if (cols.empty()) return Vec::Zero(log_s.rows());
  Vec coef(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < cols.size(); ++a) coef(static_cast<Eigen::Index>(a)) = coefficients[j](static_cast<Eigen::Index>(cols[a]));
  return b.design(norms[j].apply(log_s), cols) * coef;
}

double sampled_s_norm(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("forward paths cover different grids");
  Vec worst = Vec::Zero(a.front().rows());
  for (std::size_t l = 0; l < a.size(); ++l) worst = worst.cwiseMax((a[l] - b[l]).rowwise().squaredNorm());
  return std::sqrt(worst.mean());
}

ForwardBlock iterate_forward_block(const Scenario& scenario, const TimeGrid& grid, std::size_t j,
                                   const Mat& start_log_s, const ValueFunctionTable& value_next,
                                   const BrownianBatch& brownian, const ConstantsLedger& ledger,
                                   const GirsanovOptions& options) {
  if (j == 0 || j > grid.blocks()) throw DimensionError("block index outside the grid's partition");
  const std::size_t first = grid.block_starts()[j - 1];
  const std::size_t L = grid.block_starts()[j] - first;
  const auto M = start_log_s.rows();
  const auto d = static_cast<Eigen::Index>(scenario.d);
  const double z_bound = options.solver.z_clip_factor * ledger.K2;

  std::vector<DriverAt> drv;
  for (std::size_t l = 0; l < L; ++l) drv.push_back(driver_at(scenario, grid.time(first + l)));

  ForwardBlock out;
  out.block = j;
  out.first_step = first;
  std::vector<Mat> n(L);
  for (std::size_t l = 0; l < L; ++l) n[l] = nonlinear_measure_integrand(drv[l], Mat::Zero(1, d));
  std::vector<Mat> X = evolve_block(scenario, grid, first, L, start_log_s, brownian, n);

  double prev = 0.0;
  std::size_t stalls = 0;
  for (std::size_t m = 1; m <= options.max_iter; ++m) {
    out.Z.assign(L, Mat());
    out.norms.assign(L, Standardization());
    out.z_coefficients.assign(L, Mat());
    Vec U = value_next.evaluate(j, X[L]);
    double vanish = 0.0;
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t k = first + l;
      const Projector proj(X[l], options.solver.basis);
      out.norms[l] = proj.standardization();
      if (constant_vector(U)) {
        out.Z[l] = Mat::Zero(M, d);
        out.z_coefficients[l] = Mat::Zero(static_cast<Eigen::Index>(proj.basis().size()), d);
      } else {
        ZEstimate ze = estimate_Z(U, brownian.increments[k], grid.dt(k), proj, z_bound);
        out.Z[l] = std::move(ze.Z);
        out.z_coefficients[l] = std::move(ze.coefficients);
      }
      if (l == 0) {
        out.start_norm = proj.standardization();
        if (constant_vector(U)) {
          out.start_coefficients = Vec::Zero(static_cast<Eigen::Index>(proj.basis().size()));
          out.start_coefficients(0) = U(0);
        } else {
          const auto sol = proj.solve(U);
          out.start_coefficients = sol.coefficients.col(0);
          U = sol.fitted.col(0);
        }
      } else if (!constant_vector(U)) {
        U = proj.project(U);
      }
      n[l] = out.Z[l].isZero(0.0) ? nonlinear_measure_integrand(drv[l], Mat::Zero(1, d))
                                  : nonlinear_measure_integrand(drv[l], out.Z[l]);
      Vec f(M);
      drv[l].apply(out.Z[l], f);
      vanish += (f + row_dot(out.Z[l], n[l])).cwiseAbs().mean() / static_cast<double>(L);
    }
    out.n = n;
    std::vector<Mat> next = evolve_block(scenario, grid, first, L, start_log_s, brownian, n);
    const double diff = sampled_s_norm(next, X);
    const double ratio = (m == 1 || prev == 0.0) ? 0.0 : diff / prev;
    out.history.push_back({j, m, diff, ratio, vanish});
    out.vanish_residual = vanish;
    if (!std::isfinite(diff)) throw ConvergenceError("forward block " + std::to_string(j) + " diverged", out.history);
    stalls = ratio >= 1.0 ? stalls + 1 : 0;
    if (stalls >= options.stall_limit) {
      throw ConvergenceError("forward block " + std::to_string(j) + " stopped contracting", out.history);
    }
    X = std::move(next);
    prev = diff;
    if (diff == 0.0 || (diff <= options.tol && m >= options.min_iter)) break;
    if (m == options.max_iter) {
      throw ConvergenceError("forward block " + std::to_string(j) + " hit the iteration cap", out.history);
    }
  }
  out.log_s = std::move(X);
  return out;
}

GirsanovResult solve_nonlinear_girsanov(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                                        double lambda_value, const ConstantsLedger& ledger,
                                        const GirsanovOptions& options) {
  GirsanovResult res;
  res.partition = build_partition(ledger, scenario.T);
  const std::size_t J = res.partition.blocks();
  if (grid.blocks() != J) throw DimensionError("grid blocks do not match the partition; build it with partition_grid");
  for (std::size_t j = 0; j <= J; ++j) {
    if (std::abs(grid.time(grid.block_starts()[j]) - res.partition.boundaries[j]) > 1e-12) {
      throw DimensionError("grid block boundaries do not match the partition");
    }
  }
  const std::size_t N = grid.steps();
  const auto d = static_cast<Eigen::Index>(scenario.d);
  const double theta_int = theta_integral(scenario, grid.times());

  ValueFunctionTable& values = res.values;
  values.times = res.partition.boundaries;
  values.basis = options.solver.basis;
  values.norms.assign(J, Standardization());
  values.coefficients.assign(J, Vec());
  values.lipschitz.assign(J + 1, 0.0);
  values.lipschitz[J] = lambda_value * scenario.payoff.lipschitz_log.value_or(0.0);
  values.terminal = [g = scenario.payoff.g, lambda_value, theta_int](const Mat& log_s) {
    Vec out(log_s.rows());
    std::vector<double> s(static_cast<std::size_t>(log_s.cols()));
    for (Eigen::Index i = 0; i < log_s.rows(); ++i) {
      for (Eigen::Index c = 0; c < log_s.cols(); ++c) s[static_cast<std::size_t>(c)] = std::exp(log_s(i, c));
      out(i) = lambda_value * g(s, {}) + theta_int;
    }
    return out;
  };

  std::vector<DriverAt> drv;
  for (std::size_t k = 0; k < N; ++k) drv.push_back(driver_at(scenario, grid.time(k)));
  const DriftShift minimal = [&drv, d](std::size_t k, const Mat&) {
    return nonlinear_measure_integrand(drv[k], Mat::Zero(1, d));
  };
  const AssetPaths start_paths = evolve_assets(scenario, grid, brownian, minimal, "Q0");

  res.z_table.basis = options.solver.basis;
  res.z_table.norms.assign(N, Standardization());
  res.z_table.coefficients.assign(N, Mat());
  for (std::size_t j = J; j >= 1; --j) {
    const std::size_t first = grid.block_starts()[j - 1];
    ForwardBlock b =
        iterate_forward_block(scenario, grid, j, start_paths.log_s[first], values, brownian, ledger, options);
    for (std::size_t l = 0; l < b.Z.size(); ++l) {
      res.z_table.norms[first + l] = b.norms[l];
      res.z_table.coefficients[first + l] = b.z_coefficients[l];
    }
    values.norms[j - 1] = b.start_norm;
    values.coefficients[j - 1] = b.start_coefficients;
    const Projector start_proj(start_paths.log_s[first], options.solver.basis, b.start_norm);
    values.lipschitz[j - 1] =
        lipschitz_of_fit(start_proj, b.start_coefficients, start_paths.log_s[first], options.lipschitz_trim);
    for (const IterationRecord& r : b.history) res.max_ratio = std::max(res.max_ratio, r.ratio);
    res.history.insert(res.history.begin(), b.history.begin(), b.history.end());
  }
  values.lipschitz_estimate = *std::max_element(values.lipschitz.begin(), values.lipschitz.end());

  // Pseudo-linear price on P-paths. The claim-free run has a deterministic
  // value at every block end, so its Z and V vanish identically.
  const AssetPaths p_paths = evolve_assets(scenario, grid, brownian);
  const auto M = static_cast<Eigen::Index>(p_paths.paths());
  std::vector<Mat> Z(N), zero(N, Mat::Zero(M, d));
  Vec V = Vec::Zero(M), stoch = Vec::Zero(M), f(M);
  for (std::size_t k = 0; k < N; ++k) {
    Z[k] = res.z_table.evaluate(k, p_paths.log_s[k]);
    drv[k].apply(Z[k], f);
    V += f * grid.dt(k);
    stoch += row_dot(Z[k], brownian.increments[k]);
  }
  const Vec claim = lambda_value * payoff_values(scenario, p_paths);
  PricingResult& r = res.pricing;
  r.route = "girsanov";
  r.price = claim.mean() + V.mean();
  r.price_stderr = sample_stderr(claim + V);
  r.diagnostics["control_variate_stderr"] = sample_stderr(claim + V - stoch);
  r.y0_lambda = r.price;
  fill_hedge_statistics(scenario, grid, Z, zero, Mat(), Mat(), r);
  r.history = res.history;
  r.ledger = ledger;

  // Converged measure as a state feedback, run from S_0 to maturity.
  const DriftShift feedback = [&](std::size_t k, const Mat& state) {
    return nonlinear_measure_integrand(drv[k], res.z_table.evaluate(k, state));
  };
  const AssetPaths q_paths = evolve_assets(scenario, grid, brownian, feedback, "Qn", true);
  Mat VQ = Mat::Zero(M, static_cast<Eigen::Index>(N + 1));
  for (std::size_t k = 0; k < N; ++k) {
    const Mat Zq = res.z_table.evaluate(k, q_paths.log_s[k]);
    drv[k].apply(Zq, f);
    const Vec step = f + row_dot(Zq, q_paths.shift[k]);
    res.vanish_residual = std::max(res.vanish_residual, step.cwiseAbs().mean());
    VQ.col(static_cast<Eigen::Index>(k + 1)) = VQ.col(static_cast<Eigen::Index>(k)) + step * grid.dt(k);
  }
  res.v_q_norm = sampled_v_norm(VQ);
  const Vec q_terminal = values.terminal(q_paths.log_s[N]);
  res.q_terminal_mean = q_terminal.mean();
  res.q_terminal_stderr = sample_stderr(q_terminal);
  res.value_table_price = values.evaluate(0, start_paths.log_s[0].topRows(1))(0) - theta_int;

  r.diagnostics["blocks"] = static_cast<double>(J);
  r.diagnostics["max_ratio"] = res.max_ratio;
  r.diagnostics["vanish_residual"] = res.vanish_residual;
  r.diagnostics["v_q_norm"] = res.v_q_norm;
  r.diagnostics["value_table_price"] = res.value_table_price;
  r.diagnostics["q_terminal_mean"] = res.q_terminal_mean;
  r.diagnostics["q_terminal_stderr"] = res.q_terminal_stderr;
  r.diagnostics["lipschitz_estimate"] = values.lipschitz_estimate;
  if (res.v_q_norm > options.vanish_tol) {
    r.diagnostics["v_q_norm_exceeds_tol"] = 1.0;
  }
  return res;
}

}  // namespace indiff
