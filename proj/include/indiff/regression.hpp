#pragma once

#include "indiff/market_model.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace indiff {

struct AssetPaths;

/// Polynomial basis in the state features. Time never enters as a regressor;
/// every grid time gets its own fit.
struct BasisSpec {
  int degree = 2;
  bool include_cross_terms = true;
};

/// Per-feature centering and scaling. Features with no spread on the sample
/// (for example all paths at S0) are marked inactive and every basis column
/// touching them is left out.
struct Standardization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  std::vector<bool> active;

  static Standardization from_state(const Mat& state);
  Mat apply(const Mat& state) const;
  std::size_t features() const { return active.size(); }
};

/// Monomials ordered by total degree, then lexicographically, column 0 being
/// the constant.
class PolynomialBasis {
 public:
  PolynomialBasis(std::size_t features, BasisSpec spec);

  std::size_t size() const { return exponents_.size(); }
  std::size_t features() const { return features_; }
  const BasisSpec& spec() const { return spec_; }
  const std::vector<int>& exponents(std::size_t column) const { return exponents_[column]; }
  std::string column_name(std::size_t column) const;
  bool uses_only(std::size_t column, const std::vector<bool>& active) const;

  /// Design matrix over the listed columns for standardized features.
  Mat design(const Mat& standardized, const std::vector<std::size_t>& columns) const;

 private:
  std::size_t features_;
  BasisSpec spec_;
  std::vector<std::vector<int>> exponents_;
};

/// Least-squares projector onto the basis span of one state sample. The
/// design and its Cholesky factor are built once and reused for every target
/// regressed at that grid time.
class Projector {
 public:
  Projector(const Mat& state, BasisSpec spec, std::optional<Standardization> norm = std::nullopt);

  struct Solution {
    Mat coefficients;  // full basis length x targets, zero for dropped columns
    Mat fitted;        // paths x targets
  };

  Solution solve(const Mat& targets) const;
  Vec project(const Vec& target) const;
  /// Basis functions at other states under this projector's standardization.
  Mat evaluate(const Mat& coefficients, const Mat& state) const;

  std::size_t paths() const { return static_cast<std::size_t>(design_.rows()); }
  const PolynomialBasis& basis() const { return basis_; }
  const Standardization& standardization() const { return norm_; }
  const std::vector<std::size_t>& kept_columns() const { return kept_; }
  const std::vector<std::size_t>& dropped_columns() const { return dropped_; }
  const Mat& design() const { return design_; }

 private:
  PolynomialBasis basis_;
  Standardization norm_;
  std::vector<std::size_t> kept_;
  std::vector<std::size_t> dropped_;
  Mat design_;
  Eigen::LLT<Mat> gram_;
};

struct CondexpFit {
  Vec coefficients;
  Vec fitted;
  double residual_norm = 0.0;        // root mean square of target - fitted
  double normal_equation_residual = 0.0;  // |X^T r| / (|X| |target|)
  std::vector<std::size_t> dropped_columns;
};

/// Least-squares estimate of E[target | state]. Requires at least 50 paths per
/// basis column. Linearly dependent columns are dropped from the highest
/// degree down and listed in the result.
CondexpFit fit_condexp(const Mat& state, const Vec& target, const BasisSpec& basis = {});

struct ZEstimate {
  Mat Z;             // paths x d
  Mat coefficients;  // full basis length x d
  Mat targets;       // paths x d raw regression targets (empty when Z is exactly 0)
  std::size_t clip_count = 0;
};

/// Integrand of the martingale increment from t_k to t_{k+1}: component j is
/// the projection of (m_{k+1} - E[m_{k+1} | state]) dW^j / dt. A martingale
/// value without dispersion gives Z = 0 exactly.
ZEstimate estimate_Z(const Vec& martingale_next, const Mat& dW, double dt, const Projector& projector,
                     double clip = std::numeric_limits<double>::infinity());

ZEstimate estimate_Z(const Vec& martingale_next, const Mat& dW, double dt, const Mat& state,
                     const BasisSpec& basis = {}, double clip = std::numeric_limits<double>::infinity());

/// Per-path error terms for the mean of a regression target at step k whose
/// raw form is `direction_k` times the innovation at k. Later fits still span
/// part of `direction_k`; that part is followed through each projector and
/// charged the innovation of its step. Adds the terms, divided by dt_k, to
/// column k of `targets`. They sum to zero over paths. A null projector marks
/// a step without a fit and ends the chain.
void add_propagated_error(Mat& targets, const std::vector<Vec>& direction, const Mat& innovation,
                          const std::vector<const Projector*>& projectors, const std::vector<double>& dt);

/// Projectors for grid times 0..N-1 of a path set.
using RegressionGrid = std::vector<Projector>;

/// When `norms` is given, each time uses that standardization (shared across
/// path sets so coefficient tables from different measures can be summed).
RegressionGrid build_regression_grid(const AssetPaths& paths, const BasisSpec& basis,
                                     const std::vector<Standardization>* norms = nullptr);

std::vector<Standardization> standardizations(const RegressionGrid& grid);

/// Z as a function of state on every step: coefficient matrices in a fixed
/// standardization. Tables on the same standardizations can be added.
struct ZTable {
  BasisSpec basis;
  std::vector<Standardization> norms;
  std::vector<Mat> coefficients;  // per step, full basis length x d

  static ZTable zeros(const BasisSpec& basis, std::vector<Standardization> norms, Eigen::Index dim);
  std::size_t steps() const { return coefficients.size(); }
  Mat evaluate(std::size_t k, const Mat& state) const;
  ZTable& operator+=(const ZTable& other);
};

/// Componentwise clip to [-bound, bound]; returns the number of entries touched.
std::size_t clip_abs(Mat& m, double bound);
std::size_t clip_abs(Vec& v, double bound);

}  // namespace indiff
