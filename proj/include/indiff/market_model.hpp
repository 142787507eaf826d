#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace indiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Piecewise-constant function of time. values[i] holds on [knots[i], knots[i+1]),
/// the last value holds to the horizon and beyond.
class ScalarSchedule {
 public:
  ScalarSchedule() : ScalarSchedule(0.0) {}
  ScalarSchedule(double constant);  // NOLINT(google-explicit-constructor)
  ScalarSchedule(std::vector<double> knots, std::vector<double> values);

  double operator()(double t) const;
  double max_abs() const;
  bool is_finite() const;
  bool is_constant() const { return values_.size() == 1; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Piecewise-constant R^d valued function of time (a volatility row).
class VectorSchedule {
 public:
  VectorSchedule() = default;
  VectorSchedule(Vec constant);  // NOLINT(google-explicit-constructor)
  VectorSchedule(std::vector<double> knots, std::vector<Vec> values);

  const Vec& operator()(double t) const;
  Eigen::Index dim() const { return values_.empty() ? 0 : values_.front().size(); }
  double max_norm() const;
  double min_norm() const;
  bool is_finite() const;
  bool is_constant() const { return values_.size() == 1; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vec>& values() const { return values_; }

 private:
  std::vector<double> knots_;
  std::vector<Vec> values_;
};

/// Running statistics of the asset path, updated at every grid time. Lets a
/// discretely monitored payoff stay Markov in (S_t, aux_t).
struct PathMonitor {
  int dim = 0;
  std::function<void(std::span<const double> s0, std::span<double> aux)> init;
  /// `k` is the grid index (k >= 1), `steps` the total number of steps N.
  std::function<void(std::size_t k, std::size_t steps, std::span<const double> s,
                     std::span<double> aux)>
      update;
};

struct PayoffSpec {
  enum class Kind { terminal_function, path_discrete_monitoring };

  Kind kind = Kind::terminal_function;
  std::string name;
  /// g(S_T, aux_T); aux_T is empty for terminal payoffs.
  std::function<double(std::span<const double> s_terminal, std::span<const double> aux)> g;
  std::optional<PathMonitor> monitor;
  double g_max = 0.0;
  /// K3 / lambda: |g(S) - g(S')| <= lipschitz_log * sum_i |ln S_i - ln S'_i|.
  std::optional<double> lipschitz_log;
  /// Assets the payoff reads; drives the forward-block constant.
  std::vector<int> relevant_assets;
  /// Price levels of the single relevant asset where g has a kink. Used to
  /// split quadrature panels in the one-dimensional oracle.
  std::vector<double> kinks;
  /// Constant payoffs have a deterministic terminal value for every lambda.
  bool is_constant = false;
};

namespace payoffs {
PayoffSpec constant(double c);
/// min(cap, S^asset), the bounded call-like claim.
PayoffSpec capped(int asset, double cap);
/// max(strike - S^asset, 0).
PayoffSpec put(int asset, double strike);
/// min(max(S^asset - lower, 0), upper - lower).
PayoffSpec call_spread(int asset, double lower, double upper);
/// min(cap, sum_i w_i S^i).
PayoffSpec capped_basket(std::vector<double> weights, double cap);
/// min(cap, arithmetic average of S^asset over all grid times t_0..t_N).
PayoffSpec capped_average(int asset, double cap);
}  // namespace payoffs

struct AssetCoefficients {
  double S0 = 1.0;
  ScalarSchedule mu;
  VectorSchedule sigma;
};

/// Market, preference and claim description. Immutable once built.
struct Scenario {
  std::string name;
  int d = 1;
  double P0 = 1.0;
  ScalarSchedule mu_P;
  VectorSchedule sigma_P;
  std::vector<AssetCoefficients> assets;
  double gamma = 1.0;
  double lambda = 1.0;
  double T = 1.0;
  PayoffSpec payoff;

  Scenario with_lambda(double value) const;
  Scenario with_payoff(PayoffSpec p) const;
};

/// Every constant the numerical schemes consume, derived from a Scenario.
struct ConstantsLedger {
  double K1 = 4.0;
  double K2 = 1.0;
  std::optional<double> K3;
  double K4 = 0.0;
  double theta_max = 0.0;
  double epsilon = 0.0;
  double sharpe_max = 0.0;  // max_t |mu_P| / ||sigma_P||
  std::size_t lambda_split_theoretical = 1;
  std::vector<double> lambda_split;
  /// Block boundaries 0 = t_0 < ... < t_J = T; empty when the payoff carries no
  /// log-Lipschitz data.
  std::vector<double> partition;
  double partition_bound = 0.0;
  std::vector<std::string> notes;
};

struct ValidationOptions {
  double K1 = 4.0;
  std::optional<std::size_t> lambda_split_override;
  double ellipticity_floor = 1e-8;
};

/// Driver coefficients frozen at one time. F(0) evaluates to exactly 0.
struct DriverAt {
  Vec sigma_P;
  double sigma_norm2 = 1.0;
  double mu_P = 0.0;
  double gamma = 1.0;
  double theta = 0.0;

  double F(const Vec& z) const;
  Vec grad(const Vec& z) const;
  /// z^T Hess(F) z, independent of the base point.
  double hessian_form(const Vec& z) const;
  /// F(base + z) - F(base) - <grad F(base), z>.
  double perturbed(const Vec& base, const Vec& z) const;
  /// Row-wise F over an M x d matrix.
  void apply(const Mat& Z, Eigen::Ref<Vec> out) const;
  /// Row-wise gradient over an M x d matrix.
  Mat grad_rows(const Mat& Z) const;
};

DriverAt driver_at(const Scenario& scenario, double t);
double theta_at(const Scenario& scenario, double t);
double driver_F(const Scenario& scenario, double t, const Vec& z);
Vec driver_grad(const Scenario& scenario, double t, const Vec& z);

/// Checks (A1)-(A3), and (A4) when the payoff declares log-Lipschitz data, and
/// fills the constants ledger. Throws ScenarioError naming the assumption.
ConstantsLedger validate_scenario(const Scenario& scenario, const ValidationOptions& options = {});

/// Equal split of lambda into J pieces with J = ceil(32 K1 K2^2) unless an
/// override is given. The last piece absorbs rounding so the sum is exact.
std::vector<double> split_lambda(const ConstantsLedger& ledger, double lambda,
                                 std::optional<std::size_t> override_count = std::nullopt);

/// sum_k theta(mid_k) dt_k over the grid times.
double theta_integral(const Scenario& scenario, std::span<const double> times);

/// Reference market: d = 2, index (0.08, (0.2, 0)), first asset with
/// (0.10, (0.15, 0.15 sqrt 3)) so ||sigma^1|| = 0.3 and rho = 0.5, a second
/// asset (0.06, (0.1, 0.2)), gamma = 1, lambda = 1, T = 1, g = min(2, S^1).
Scenario reference_scenario();

/// Reference market with sigma^1 rotated to (0, 0.3), orthogonal to sigma_P.
Scenario orthogonal_reference_scenario();

/// Reference market with correlation `rho` between S^1 and the index.
Scenario correlated_reference_scenario(double rho);

}  // namespace indiff
