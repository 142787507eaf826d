#include "indiff/path_engine.hpp"

#include "indiff/errors.hpp"
#include "indiff/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <thread>

namespace indiff {

TimeGrid TimeGrid::uniform(double T, std::size_t steps) {
  const double b[] = {0.0, T};
  return blocked(b, steps);
}

TimeGrid TimeGrid::blocked(std::span<const double> boundaries, std::size_t steps) {
  if (boundaries.size() < 2) throw std::invalid_argument("grid needs at least one block");
  if (steps == 0) throw std::invalid_argument("grid needs at least one step");
  if (boundaries.front() != 0.0) throw std::invalid_argument("grid must start at 0");
  for (std::size_t j = 1; j < boundaries.size(); ++j) {
    if (!(boundaries[j] > boundaries[j - 1])) throw std::invalid_argument("block boundaries must increase");
  }
  const std::size_t J = boundaries.size() - 1;
  const std::size_t total = std::max(steps, J);
  const std::size_t base = total / J;
  const std::size_t extra = total % J;

  TimeGrid g;
  g.times_.push_back(0.0);
  g.block_starts_.push_back(0);
  for (std::size_t j = 0; j < J; ++j) {
    const std::size_t n = base + (j < extra ? 1 : 0);
    const double a = boundaries[j];
    const double b = boundaries[j + 1];
    for (std::size_t s = 1; s <= n; ++s) {
      g.times_.push_back(s == n ? b : a + (b - a) * static_cast<double>(s) / static_cast<double>(n));
    }
    g.block_starts_.push_back(g.times_.size() - 1);
  }
  return g;
}

BrownianBatch simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths, std::uint64_t seed,
                                unsigned workers) {
  if (paths == 0) throw std::invalid_argument("simulate_brownian needs at least one path");
  if (dim == 0) throw std::invalid_argument("simulate_brownian needs a positive dimension");
  BrownianBatch b;
  b.paths = paths;
  b.dim = dim;
  b.seed = seed;
  const std::size_t N = grid.steps();
  b.increments.assign(N, Mat(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(dim)));
  std::vector<double> root_dt(N);
  for (std::size_t k = 0; k < N; ++k) root_dt[k] = std::sqrt(grid.dt(k));
  const std::uint32_t blocks = static_cast<std::uint32_t>((dim + 1) / 2);

  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (std::size_t k = 0; k < N; ++k) {
        Mat& inc = b.increments[k];
        for (std::uint32_t blk = 0; blk < blocks; ++blk) {
          const auto z = normal_pair(seed, BrownianBatch::stream_id(i), static_cast<std::uint32_t>(k), blk);
          const auto c = static_cast<Eigen::Index>(2 * blk);
          inc(row, c) = root_dt[k] * z[0];
          if (c + 1 < static_cast<Eigen::Index>(dim)) inc(row, c + 1) = root_dt[k] * z[1];
        }
      }
    }
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(paths)));
  if (workers == 1) {
    fill(0, paths);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (paths + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(paths, lo + chunk);
      if (lo < hi) pool.emplace_back(fill, lo, hi);
    }
  }
  return b;
}

Mat log_step(const Scenario& scenario, double t, double dt, const Mat& log_s, const Mat& dW, const Mat* shift) {
  const auto d = static_cast<Eigen::Index>(scenario.d);
  Mat sigma(d, d);
  Eigen::RowVectorXd drift(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& a = scenario.assets[static_cast<std::size_t>(i)];
    sigma.row(i) = a.sigma(t).transpose();
    drift(i) = a.mu(t) - 0.5 * sigma.row(i).squaredNorm();
  }
  Mat next = log_s + dW * sigma.transpose();
  next.rowwise() += dt * drift;
  if (shift != nullptr && shift->size() > 0) {
    if (shift->rows() == 1) {
      next.rowwise() -= dt * (shift->row(0) * sigma.transpose());
    } else {
      next -= dt * (*shift * sigma.transpose());
    }
  }
  return next;
}

namespace {

Vec index_log_step(const Scenario& s, double t, double dt, const Vec& log_p, const Mat& dW, const Mat* shift) {
  const Vec& sig = s.sigma_P(t);
  Vec next = log_p + dW * sig;
  next.array() += dt * (s.mu_P(t) - 0.5 * sig.squaredNorm());
  if (shift != nullptr && shift->size() > 0) {
    if (shift->rows() == 1) {
      next.array() -= dt * (shift->row(0).dot(sig));
    } else {
      next -= dt * (*shift * sig);
    }
  }
  return next;
}

}  // namespace

void update_monitor(const Scenario& scenario, std::size_t k, std::size_t steps, const Mat& log_s, Mat& aux) {
  const auto& mon = scenario.payoff.monitor;
  if (!mon) return;
  std::vector<double> s(static_cast<std::size_t>(scenario.d));
  std::vector<double> a(static_cast<std::size_t>(mon->dim));
  for (Eigen::Index i = 0; i < log_s.rows(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::exp(log_s(i, static_cast<Eigen::Index>(j)));
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = aux(i, static_cast<Eigen::Index>(j));
    if (k == 0) mon->init(s, a);
    mon->update(k, steps, s, a);
    for (std::size_t j = 0; j < a.size(); ++j) aux(i, static_cast<Eigen::Index>(j)) = a[j];
  }
}

BrownianBatch antithetic_brownian(const TimeGrid& grid, std::size_t dim, std::size_t pairs, std::uint64_t seed) {
  BrownianBatch half = simulate_brownian(grid, dim, pairs, seed);
  const auto P = static_cast<Eigen::Index>(pairs);
  for (Mat& inc : half.increments) {
    Mat both(2 * P, inc.cols());
    both.topRows(P) = inc;
    both.bottomRows(P) = -inc;
    inc = std::move(both);
  }
  half.paths = 2 * pairs;
  return half;
}

AssetPaths evolve_assets(const Scenario& scenario, const TimeGrid& grid, const BrownianBatch& brownian,
                         const DriftShift& shift, std::string measure_tag, bool record_shift) {
  if (brownian.steps() != grid.steps()) throw DimensionError("Brownian batch and grid disagree on step count");
  if (brownian.dim != static_cast<std::size_t>(scenario.d)) {
    throw DimensionError("Brownian dimension does not match scenario dimension");
  }
  const auto M = static_cast<Eigen::Index>(brownian.paths);
  const std::size_t N = grid.steps();
  const auto d = static_cast<Eigen::Index>(scenario.d);

  AssetPaths out;
  out.measure_tag = std::move(measure_tag);
  out.log_s.resize(N + 1);
  out.log_p.resize(M, static_cast<Eigen::Index>(N + 1));
  Eigen::RowVectorXd x0(d);
  for (Eigen::Index i = 0; i < d; ++i) x0(i) = std::log(scenario.assets[static_cast<std::size_t>(i)].S0);
  out.log_s[0] = x0.replicate(M, 1);
  out.log_p.col(0).setConstant(std::log(scenario.P0));

  const bool monitored = scenario.payoff.monitor.has_value();
  if (monitored) {
    out.aux.assign(N + 1, Mat::Zero(M, scenario.payoff.monitor->dim));
    update_monitor(scenario, 0, N, out.log_s[0], out.aux[0]);
  }
  if (record_shift && shift) out.shift.resize(N);

  for (std::size_t k = 0; k < N; ++k) {
    const double t = grid.time(k);
    const double dt = grid.dt(k);
    Mat n;
    if (shift) {
      n = monitored ? shift(k, regression_state(out, k)) : shift(k, out.log_s[k]);
      if (n.cols() != d || (n.rows() != 1 && n.rows() != M)) throw DimensionError("drift shift has wrong shape");
      if (!n.allFinite()) throw std::invalid_argument("drift shift is not finite at step " + std::to_string(k));
    }
    const Mat* np = shift ? &n : nullptr;
    out.log_s[k + 1] = log_step(scenario, t, dt, out.log_s[k], brownian.increments[k], np);
    out.log_p.col(static_cast<Eigen::Index>(k + 1)) =
        index_log_step(scenario, t, dt, out.log_p.col(static_cast<Eigen::Index>(k)), brownian.increments[k], np);
    if (monitored) {
      out.aux[k + 1] = out.aux[k];
      update_monitor(scenario, k + 1, N, out.log_s[k + 1], out.aux[k + 1]);
    }
    if (record_shift && shift) out.shift[k] = std::move(n);
  }
  return out;
}

Mat regression_state(const AssetPaths& paths, std::size_t k) {
  if (paths.aux.empty()) return paths.log_s[k];
  Mat st(paths.log_s[k].rows(), paths.log_s[k].cols() + paths.aux[k].cols());
  st << paths.log_s[k], paths.aux[k];
  return st;
}

Vec payoff_values(const Scenario& scenario, const AssetPaths& paths) {
  const std::size_t N = paths.steps();
  const Mat& x = paths.log_s[N];
  Vec g(x.rows());
  std::vector<double> s(static_cast<std::size_t>(x.cols()));
  std::vector<double> a(paths.aux.empty() ? 0 : static_cast<std::size_t>(paths.aux[N].cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::exp(x(i, static_cast<Eigen::Index>(j)));
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = paths.aux[N](i, static_cast<Eigen::Index>(j));
    g(i) = scenario.payoff.g(s, a);
  }
  return g;
}

MeasureChange doleans_weights(std::vector<Mat> integrand, const BrownianBatch& brownian, const TimeGrid& grid) {
  const std::size_t N = grid.steps();
  if (integrand.size() != N || brownian.steps() != N) throw DimensionError("integrand must cover the full grid");
  const auto M = static_cast<Eigen::Index>(brownian.paths);
  MeasureChange mc;
  mc.weights.resize(M, static_cast<Eigen::Index>(N + 1));
  Vec log_w = Vec::Zero(M);
  mc.weights.col(0).setOnes();
  std::vector<Vec> qv_step(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Mat& h = integrand[k];
    const Mat& dW = brownian.increments[k];
    if (!h.allFinite()) throw std::invalid_argument("measure integrand is not finite at step " + std::to_string(k));
    const double dt = grid.dt(k);
    if (h.rows() == 1) {
      const Eigen::RowVectorXd row = h.row(0);
      log_w += dW * row.transpose();
      log_w.array() -= 0.5 * row.squaredNorm() * dt;
      qv_step[k] = Vec::Constant(M, row.squaredNorm() * dt);
    } else if (h.rows() == M && h.cols() == dW.cols()) {
      log_w += (h.array() * dW.array()).rowwise().sum().matrix();
      qv_step[k] = h.rowwise().squaredNorm() * dt;
      log_w -= 0.5 * qv_step[k];
    } else {
      throw DimensionError("measure integrand has wrong shape");
    }
    mc.weights.col(static_cast<Eigen::Index>(k + 1)) = log_w.array().exp().matrix();
  }
  Vec remaining = Vec::Zero(M);
  for (std::size_t k = N; k-- > 0;) {
    remaining += qv_step[k];
    mc.bmo_estimate = std::max(mc.bmo_estimate, remaining.maxCoeff());
  }
  mc.integrand = std::move(integrand);
  return mc;
}

namespace {

void put_le(std::ofstream& os, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_le(std::ofstream& os, double x) { put_le(os, std::bit_cast<std::uint64_t>(x)); }

}  // namespace

void write_paths_binary(const std::filesystem::path& file, const AssetPaths& paths) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string());
  const std::size_t M = paths.paths();
  const std::size_t N = paths.steps();
  const std::size_t d = paths.log_s.empty() ? 0 : static_cast<std::size_t>(paths.log_s.front().cols());
  put_le(os, static_cast<std::uint64_t>(M));
  put_le(os, static_cast<std::uint64_t>(N));
  put_le(os, static_cast<std::uint64_t>(d));
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k <= N; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        put_le(os, std::exp(paths.log_s[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
    }
  }
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k <= N; ++k) {
      put_le(os, std::exp(paths.log_p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))));
    }
  }
}

}  // namespace indiff
