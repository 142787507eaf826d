#include "indiff/regression.hpp"

#include "indiff/errors.hpp"
#include "indiff/path_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace indiff {

namespace {

constexpr std::size_t kPathsPerColumn = 50;
constexpr double kRankTolerance = 1e-10;

void exponent_vectors(std::size_t features, int total, std::size_t pos, std::vector<int>& cur,
                      std::vector<std::vector<int>>& out) {
  if (pos + 1 == features) {
    cur[pos] = total;
    out.push_back(cur);
    return;
  }
  for (int e = total; e >= 0; --e) {
    cur[pos] = e;
    exponent_vectors(features, total - e, pos + 1, cur, out);
  }
}

}  // namespace

Standardization Standardization::from_state(const Mat& state) {
  Standardization s;
  const auto q = state.cols();
  const double m = static_cast<double>(state.rows());
  s.mean = state.colwise().mean();
  s.scale.resize(q);
  s.active.assign(static_cast<std::size_t>(q), false);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double var = (state.col(j).array() - s.mean(j)).square().sum() / std::max(1.0, m - 1.0);
    const double sd = std::sqrt(var);
    const bool spread = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)));
    s.active[static_cast<std::size_t>(j)] = spread;
    s.scale(j) = spread ? sd : 1.0;
  }
  return s;
}

Mat Standardization::apply(const Mat& state) const {
  if (static_cast<std::size_t>(state.cols()) != active.size()) {
    throw DimensionError("state has " + std::to_string(state.cols()) + " features, standardization expects " +
                         std::to_string(active.size()));
  }
  Mat out = (state.rowwise() - mean).array().rowwise() / scale.array();
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (!active[j]) out.col(static_cast<Eigen::Index>(j)).setZero();
  }
  return out;
}

PolynomialBasis::PolynomialBasis(std::size_t features, BasisSpec spec) : features_(features), spec_(spec) {
  if (spec.degree < 1) throw std::invalid_argument("basis degree must be at least 1");
  if (features == 0) throw std::invalid_argument("basis needs at least one feature");
  std::vector<int> cur(features, 0);
  for (int total = 0; total <= spec.degree; ++total) {
    std::vector<std::vector<int>> level;
    exponent_vectors(features, total, 0, cur, level);
    for (auto& e : level) {
      const auto nonzero = std::count_if(e.begin(), e.end(), [](int x) { return x > 0; });
      if (nonzero > 1 && !spec.include_cross_terms) continue;
      exponents_.push_back(std::move(e));
    }
  }
}

std::string PolynomialBasis::column_name(std::size_t column) const {
  const auto& e = exponents_[column];
  std::ostringstream os;
  bool any = false;
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (e[j] == 0) continue;
    if (any) os << '*';
    os << 'x' << j;
    if (e[j] > 1) os << '^' << e[j];
    any = true;
  }
  return any ? os.str() : "1";
}

bool PolynomialBasis::uses_only(std::size_t column, const std::vector<bool>& active) const {
  const auto& e = exponents_[column];
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (e[j] > 0 && !active[j]) return false;
  }
  return true;
}

Mat PolynomialBasis::design(const Mat& z, const std::vector<std::size_t>& columns) const {
  Mat X(z.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& e = exponents_[columns[c]];
    auto col = X.col(static_cast<Eigen::Index>(c));
    col.setOnes();
    for (std::size_t j = 0; j < e.size(); ++j) {
      for (int p = 0; p < e[j]; ++p) col.array() *= z.col(static_cast<Eigen::Index>(j)).array();
    }
  }
  return X;
}

Projector::Projector(const Mat& state, BasisSpec spec, std::optional<Standardization> norm)
    : basis_(static_cast<std::size_t>(state.cols()), spec),
      norm_(norm ? std::move(*norm) : Standardization::from_state(state)) {
  if (state.rows() == 0) throw DimensionError("projector needs at least one path");
  if (!state.allFinite()) throw RegressionError("state contains non-finite values", {});
  const Mat z = norm_.apply(state);

  std::vector<std::size_t> candidates;
  for (std::size_t c = 0; c < basis_.size(); ++c) {
    if (basis_.uses_only(c, norm_.active)) {
      candidates.push_back(c);
    } else {
      dropped_.push_back(c);
    }
  }
  const Mat Xc = basis_.design(z, candidates);
  const Mat G = Xc.transpose() * Xc;

  // Greedy pivot-free Cholesky: a column stays only if it adds rank.
  std::vector<Eigen::Index> keep_idx;
  Mat L;
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(candidates.size()); ++c) {
    const double gcc = G(c, c);
    double resid = gcc;
    Vec l;
    if (!keep_idx.empty()) {
      Vec g(static_cast<Eigen::Index>(keep_idx.size()));
      for (std::size_t r = 0; r < keep_idx.size(); ++r) g(static_cast<Eigen::Index>(r)) = G(keep_idx[r], c);
      l = L.triangularView<Eigen::Lower>().solve(g);
      resid = gcc - l.squaredNorm();
    }
    if (!(gcc > 0.0) || !(resid > kRankTolerance * gcc)) {
      dropped_.push_back(candidates[static_cast<std::size_t>(c)]);
      continue;
    }
    const auto n = static_cast<Eigen::Index>(keep_idx.size());
    Mat Ln = Mat::Zero(n + 1, n + 1);
    if (n > 0) {
      Ln.topLeftCorner(n, n) = L;
      Ln.block(n, 0, 1, n) = l.transpose();
    }
    Ln(n, n) = std::sqrt(resid);
    L = std::move(Ln);
    keep_idx.push_back(c);
    kept_.push_back(candidates[static_cast<std::size_t>(c)]);
  }
  std::sort(dropped_.begin(), dropped_.end());
  if (kept_.empty()) throw RegressionError("no basis column survives rank checks", dropped_);
  if (static_cast<std::size_t>(state.rows()) < kPathsPerColumn * kept_.size()) {
    std::ostringstream msg;
    msg << "regression needs at least " << kPathsPerColumn << " paths per basis column (" << kept_.size()
        << " columns, " << state.rows() << " paths); reduce the basis degree";
    throw RegressionError(msg.str(), kept_);
  }

  design_.resize(Xc.rows(), static_cast<Eigen::Index>(keep_idx.size()));
  Mat Gk(static_cast<Eigen::Index>(keep_idx.size()), static_cast<Eigen::Index>(keep_idx.size()));
  for (std::size_t a = 0; a < keep_idx.size(); ++a) {
    design_.col(static_cast<Eigen::Index>(a)) = Xc.col(keep_idx[a]);
    for (std::size_t b = 0; b < keep_idx.size(); ++b) {
      Gk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = G(keep_idx[a], keep_idx[b]);
    }
  }
  gram_.compute(Gk);
  if (gram_.info() != Eigen::Success) throw RegressionError("normal equations are not positive definite", kept_);
}

Projector::Solution Projector::solve(const Mat& targets) const {
  if (targets.rows() != design_.rows()) throw DimensionError("target length does not match the state sample");
  Solution s;
  const Mat beta = gram_.solve(design_.transpose() * targets);
  s.fitted = design_ * beta;
  s.coefficients = Mat::Zero(static_cast<Eigen::Index>(basis_.size()), targets.cols());
  for (std::size_t a = 0; a < kept_.size(); ++a) {
    s.coefficients.row(static_cast<Eigen::Index>(kept_[a])) = beta.row(static_cast<Eigen::Index>(a));
  }
  return s;
}

Vec Projector::project(const Vec& target) const {
  if (target.size() != design_.rows()) throw DimensionError("target length does not match the state sample");
  const Vec beta = gram_.solve(design_.transpose() * target);
  return design_ * beta;
}

Mat Projector::evaluate(const Mat& coefficients, const Mat& state) const {
  const Mat z = norm_.apply(state);
  Mat kept_coef(static_cast<Eigen::Index>(kept_.size()), coefficients.cols());
  for (std::size_t a = 0; a < kept_.size(); ++a) {
    kept_coef.row(static_cast<Eigen::Index>(a)) = coefficients.row(static_cast<Eigen::Index>(kept_[a]));
  }
  return basis_.design(z, kept_) * kept_coef;
}

CondexpFit fit_condexp(const Mat& state, const Vec& target, const BasisSpec& basis) {
  if (state.rows() != target.size()) throw DimensionError("state and target disagree on path count");
  const Projector proj(state, basis);
  const auto sol = proj.solve(target);
  CondexpFit fit;
  fit.coefficients = sol.coefficients.col(0);
  fit.fitted = sol.fitted.col(0);
  const Vec r = target - fit.fitted;
  fit.residual_norm = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
  const double scale = proj.design().norm() * target.norm();
  fit.normal_equation_residual = scale > 0.0 ? (proj.design().transpose() * r).norm() / scale : 0.0;
  fit.dropped_columns = proj.dropped_columns();
  return fit;
}

std::size_t clip_abs(Mat& m, double bound) {
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      double& x = m(i, j);
      if (x > bound) {
        x = bound;
        ++count;
      } else if (x < -bound) {
        x = -bound;
        ++count;
      }
    }
  }
  return count;
}

std::size_t clip_abs(Vec& v, double bound) {
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) > bound) {
      v(i) = bound;
      ++count;
    } else if (v(i) < -bound) {
      v(i) = -bound;
      ++count;
    }
  }
  return count;
}

ZEstimate estimate_Z(const Vec& martingale_next, const Mat& dW, double dt, const Projector& projector,
                     double clip) {
  if (martingale_next.size() != dW.rows()) throw DimensionError("martingale and increments disagree on paths");
  if (!(dt > 0.0)) throw std::invalid_argument("estimate_Z needs a positive step");
  ZEstimate out;
  const auto p = static_cast<Eigen::Index>(projector.basis().size());
  if (martingale_next.maxCoeff() == martingale_next.minCoeff()) {
    out.Z = Mat::Zero(dW.rows(), dW.cols());
    out.coefficients = Mat::Zero(p, dW.cols());
    return out;
  }
  const Vec centered = martingale_next - projector.project(martingale_next);
  out.targets = (dW.array().colwise() * centered.array()) / dt;
  auto sol = projector.solve(out.targets);
  out.Z = std::move(sol.fitted);
  out.coefficients = std::move(sol.coefficients);
  if (std::isfinite(clip)) out.clip_count = clip_abs(out.Z, clip);
  return out;
}

void add_propagated_error(Mat& targets, const std::vector<Vec>& direction, const Mat& innovation,
                          const std::vector<const Projector*>& projectors, const std::vector<double>& dt) {
  const std::size_t N = projectors.size();
  if (direction.size() != N || dt.size() != N || static_cast<std::size_t>(innovation.cols()) != N ||
      static_cast<std::size_t>(targets.cols()) != N || innovation.rows() != targets.rows()) {
    throw DimensionError("propagated error inputs disagree");
  }
  for (std::size_t k = 0; k + 1 < N; ++k) {
    if (projectors[k] == nullptr || direction[k].size() == 0) continue;
    Vec w = direction[k] - projectors[k]->project(direction[k]);
    const double floor = 1e-8 * w.squaredNorm();
    Vec extra = Vec::Zero(targets.rows());
    for (std::size_t j = k + 1; j < N && projectors[j] != nullptr; ++j) {
      w = projectors[j]->project(w);
      if (w.squaredNorm() <= floor) break;
      extra += (w.array() * innovation.col(static_cast<Eigen::Index>(j)).array()).matrix();
    }
    targets.col(static_cast<Eigen::Index>(k)) += extra / dt[k];
  }
}

ZEstimate estimate_Z(const Vec& martingale_next, const Mat& dW, double dt, const Mat& state,
                     const BasisSpec& basis, double clip) {
  const Projector proj(state, basis);
  return estimate_Z(martingale_next, dW, dt, proj, clip);
}

RegressionGrid build_regression_grid(const AssetPaths& paths, const BasisSpec& basis,
                                     const std::vector<Standardization>* norms) {
  const std::size_t N = paths.steps();
  if (norms != nullptr && norms->size() < N) throw DimensionError("standardizations do not cover the grid");
  RegressionGrid grid;
  grid.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    std::optional<Standardization> n;
    if (norms != nullptr) n = (*norms)[k];
    grid.emplace_back(regression_state(paths, k), basis, std::move(n));
  }
  return grid;
}

std::vector<Standardization> standardizations(const RegressionGrid& grid) {
  std::vector<Standardization> out;
  out.reserve(grid.size());
  for (const auto& p : grid) out.push_back(p.standardization());
  return out;
}

ZTable ZTable::zeros(const BasisSpec& basis, std::vector<Standardization> norms, Eigen::Index dim) {
  ZTable t;
  t.basis = basis;
  t.norms = std::move(norms);
  t.coefficients.reserve(t.norms.size());
  for (const auto& n : t.norms) {
    const PolynomialBasis b(n.features(), basis);
    t.coefficients.push_back(Mat::Zero(static_cast<Eigen::Index>(b.size()), dim));
  }
  return t;
}

Mat ZTable::evaluate(std::size_t k, const Mat& state) const {
  const PolynomialBasis b(norms[k].features(), basis);
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < b.size(); ++c) {
    if (coefficients[k].row(static_cast<Eigen::Index>(c)).any()) cols.push_back(c);
  }
  if (cols.empty()) return Mat::Zero(state.rows(), coefficients[k].cols());
  Mat coef(static_cast<Eigen::Index>(cols.size()), coefficients[k].cols());
  for (std::size_t a = 0; a < cols.size(); ++a) {
    coef.row(static_cast<Eigen::Index>(a)) = coefficients[k].row(static_cast<Eigen::Index>(cols[a]));
  }
  return b.design(norms[k].apply(state), cols) * coef;
}

ZTable& ZTable::operator+=(const ZTable& other) {
  if (other.coefficients.size() != coefficients.size()) throw DimensionError("Z tables cover different grids");
  for (std::size_t k = 0; k < coefficients.size(); ++k) {
    if (other.coefficients[k].rows() != coefficients[k].rows() ||
        other.coefficients[k].cols() != coefficients[k].cols()) {
      throw DimensionError("Z tables use different bases");
    }
    coefficients[k] += other.coefficients[k];
  }
  return *this;
}

}  // namespace indiff
