#include "indiff/market_model.hpp"

#include "indiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace indiff {

namespace {

std::size_t piece_index(const std::vector<double>& knots, double t) {
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  return it == knots.begin() ? 0 : static_cast<std::size_t>(it - knots.begin()) - 1;
}

void check_knots(const std::vector<double>& knots, std::size_t values) {
  if (knots.empty() || knots.size() != values) {
    throw std::invalid_argument("schedule needs one value per knot");
  }
  if (knots.front() != 0.0) {
    throw std::invalid_argument("schedule knots must start at t = 0");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) {
      throw std::invalid_argument("schedule knots must be strictly increasing");
    }
  }
}

}  // namespace

ScalarSchedule::ScalarSchedule(double constant) : knots_{0.0}, values_{constant} {}

ScalarSchedule::ScalarSchedule(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  check_knots(knots_, values_.size());
}

double ScalarSchedule::operator()(double t) const {
  return values_[piece_index(knots_, t)];
}

double ScalarSchedule::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool ScalarSchedule::is_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

VectorSchedule::VectorSchedule(Vec constant) : knots_{0.0}, values_{std::move(constant)} {}

VectorSchedule::VectorSchedule(std::vector<double> knots, std::vector<Vec> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  check_knots(knots_, values_.size());
  for (const auto& v : values_) {
    if (v.size() != values_.front().size()) {
      throw std::invalid_argument("vector schedule pieces must share one dimension");
    }
  }
}

const Vec& VectorSchedule::operator()(double t) const {
  return values_[piece_index(knots_, t)];
}

double VectorSchedule::max_norm() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, v.norm());
  return m;
}

double VectorSchedule::min_norm() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : values_) m = std::min(m, v.norm());
  return values_.empty() ? 0.0 : m;
}

bool VectorSchedule::is_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Vec& v) { return v.allFinite(); });
}

// ---------------------------------------------------------------------------
// Payoffs

namespace payoffs {

PayoffSpec constant(double c) {
  PayoffSpec p;
  p.name = "constant";
  p.g = [c](std::span<const double>, std::span<const double>) { return c; };
  p.g_max = c;
  p.lipschitz_log = 0.0;
  p.is_constant = true;
  return p;
}

PayoffSpec capped(int asset, double cap) {
  PayoffSpec p;
  p.name = "capped";
  p.g = [asset, cap](std::span<const double> s, std::span<const double>) {
    return std::min(cap, s[static_cast<std::size_t>(asset)]);
  };
  p.g_max = cap;
  // d/dx min(K, e^x) <= K
  p.lipschitz_log = cap;
  p.relevant_assets = {asset};
  p.kinks = {cap};
  return p;
}

PayoffSpec put(int asset, double strike) {
  PayoffSpec p;
  p.name = "put";
  p.g = [asset, strike](std::span<const double> s, std::span<const double>) {
    return std::max(strike - s[static_cast<std::size_t>(asset)], 0.0);
  };
  p.g_max = strike;
  p.lipschitz_log = strike;
  p.relevant_assets = {asset};
  p.kinks = {strike};
  return p;
}

PayoffSpec call_spread(int asset, double lower, double upper) {
  if (!(upper > lower) || lower < 0.0) {
    throw std::invalid_argument("call_spread needs 0 <= lower < upper");
  }
  PayoffSpec p;
  p.name = "call_spread";
  p.g = [asset, lower, upper](std::span<const double> s, std::span<const double>) {
    return std::min(std::max(s[static_cast<std::size_t>(asset)] - lower, 0.0), upper - lower);
  };
  p.g_max = upper - lower;
  p.lipschitz_log = upper;
  p.relevant_assets = {asset};
  p.kinks = {lower, upper};
  return p;
}

PayoffSpec capped_basket(std::vector<double> weights, double cap) {
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("capped_basket weights must be nonnegative");
  }
  PayoffSpec p;
  p.name = "capped_basket";
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) p.relevant_assets.push_back(static_cast<int>(i));
  }
  p.g = [weights = std::move(weights), cap](std::span<const double> s, std::span<const double>) {
    double b = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) b += weights[i] * s[i];
    return std::min(cap, b);
  };
  p.g_max = cap;
  // each partial derivative w_i S^i is bounded by the cap where g is not flat
  p.lipschitz_log = cap;
  return p;
}

PayoffSpec capped_average(int asset, double cap) {
  PayoffSpec p;
  p.kind = PayoffSpec::Kind::path_discrete_monitoring;
  p.name = "capped_average";
  PathMonitor m;
  m.dim = 1;
  const auto a = static_cast<std::size_t>(asset);
  // aux holds sum_{j<=k} S_j / (N + 1), so aux_T is the full average.
  m.init = [](std::span<const double>, std::span<double> aux) { aux[0] = 0.0; };
  m.update = [a](std::size_t, std::size_t steps, std::span<const double> s, std::span<double> aux) {
    aux[0] += s[a] / static_cast<double>(steps + 1);
  };
  p.monitor = m;
  p.g = [cap](std::span<const double>, std::span<const double> aux) {
    return std::min(cap, aux[0]);
  };
  p.g_max = cap;
  p.relevant_assets = {asset};
  return p;
}

}  // namespace payoffs

Scenario Scenario::with_lambda(double value) const {
  Scenario s = *this;
  s.lambda = value;
  return s;
}

Scenario Scenario::with_payoff(PayoffSpec p) const {
  Scenario s = *this;
  s.payoff = std::move(p);
  return s;
}

// ---------------------------------------------------------------------------
// Driver

double DriverAt::F(const Vec& z) const {
  // Expanded form: the mu^2/(2 gamma |sigma|^2) term of the square cancels
  // theta identically, so F(0) is exactly zero in floating point.
  const double a = sigma_P.dot(z);
  return -0.5 * gamma * z.squaredNorm() + 0.5 * gamma * a * a / sigma_norm2 - mu_P * a / sigma_norm2;
}

Vec DriverAt::grad(const Vec& z) const {
  const double a = sigma_P.dot(z);
  return -gamma * z + (gamma / sigma_norm2) * (a - mu_P / gamma) * sigma_P;
}

double DriverAt::hessian_form(const Vec& z) const {
  const double a = sigma_P.dot(z);
  return -gamma * z.squaredNorm() + gamma * a * a / sigma_norm2;
}

double DriverAt::perturbed(const Vec& base, const Vec& z) const {
  return F(base + z) - F(base) - grad(base).dot(z);
}

void DriverAt::apply(const Mat& Z, Eigen::Ref<Vec> out) const {
  const Vec a = Z * sigma_P;
  out = (-0.5 * gamma) * Z.rowwise().squaredNorm() +
        ((0.5 * gamma / sigma_norm2) * a.array().square() - (mu_P / sigma_norm2) * a.array()).matrix();
}

Mat DriverAt::grad_rows(const Mat& Z) const {
  const Vec a = Z * sigma_P;
  const Vec coef = (gamma / sigma_norm2) * (a.array() - mu_P / gamma).matrix();
  return -gamma * Z + coef * sigma_P.transpose();
}

DriverAt driver_at(const Scenario& scenario, double t) {
  DriverAt drv;
  drv.sigma_P = scenario.sigma_P(t);
  drv.sigma_norm2 = drv.sigma_P.squaredNorm();
  if (!(drv.sigma_norm2 > 0.0)) {
    throw ScenarioError("A2", "index volatility vanishes at t = " + std::to_string(t));
  }
  drv.mu_P = scenario.mu_P(t);
  drv.gamma = scenario.gamma;
  drv.theta = drv.mu_P * drv.mu_P / (2.0 * drv.gamma * drv.sigma_norm2);
  return drv;
}

double theta_at(const Scenario& scenario, double t) { return driver_at(scenario, t).theta; }

double driver_F(const Scenario& scenario, double t, const Vec& z) {
  return driver_at(scenario, t).F(z);
}

Vec driver_grad(const Scenario& scenario, double t, const Vec& z) {
  return driver_at(scenario, t).grad(z);
}

double theta_integral(const Scenario& scenario, std::span<const double> times) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double mid = 0.5 * (times[k] + times[k + 1]);
    acc += theta_at(scenario, mid) * (times[k + 1] - times[k]);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::vector<double> coefficient_knots(const Scenario& s) {
  std::set<double> all(s.mu_P.knots().begin(), s.mu_P.knots().end());
  all.insert(s.sigma_P.knots().begin(), s.sigma_P.knots().end());
  std::vector<double> out;
  for (double t : all) {
    if (t <= s.T) out.push_back(t);
  }
  return out;
}

void check_payoff_range(const Scenario& s) {
  const auto& p = s.payoff;
  // Probe on constant paths at a spread of price levels.
  const std::vector<double> levels = {1e-3, 0.25, 0.5, 0.9, 1.0, 1.1, 2.0, 4.0, 10.0, 100.0};
  std::vector<double> state(static_cast<std::size_t>(s.d));
  std::vector<double> aux(p.monitor ? static_cast<std::size_t>(p.monitor->dim) : 0);
  for (double level : levels) {
    for (int i = 0; i < s.d; ++i) state[static_cast<std::size_t>(i)] = level * s.assets[static_cast<std::size_t>(i)].S0;
    if (p.monitor) {
      p.monitor->init(state, aux);
      constexpr std::size_t probe_steps = 10;
      for (std::size_t k = 0; k <= probe_steps; ++k) p.monitor->update(k, probe_steps, state, aux);
    }
    const double g = p.g(state, aux);
    if (!std::isfinite(g) || g < 0.0 || g > p.g_max * (1.0 + 1e-12) + 1e-12) {
      std::ostringstream msg;
      msg << "payoff " << p.name << " evaluates to " << g << " outside [0, " << p.g_max
          << "] at price level " << level;
      throw ScenarioError("A3", msg.str());
    }
  }
}

}  // namespace

ConstantsLedger validate_scenario(const Scenario& s, const ValidationOptions& options) {
  if (s.d < 1) throw ScenarioError("A1", "dimension d must be positive");
  if (!(s.gamma > 0.0) || !std::isfinite(s.gamma)) {
    throw ScenarioError("A1", "risk aversion gamma must be positive and finite");
  }
  if (!(s.T > 0.0) || !std::isfinite(s.T)) throw ScenarioError("A1", "maturity T must be positive");
  if (!(s.lambda >= 0.0) || !std::isfinite(s.lambda)) {
    throw ScenarioError("A1", "units of claim lambda must be finite and nonnegative");
  }
  if (!(s.P0 > 0.0) || !std::isfinite(s.P0)) throw ScenarioError("A1", "P0 must be positive");
  if (static_cast<int>(s.assets.size()) != s.d) {
    throw ScenarioError("A1", "expected " + std::to_string(s.d) + " non-traded assets, got " +
                                  std::to_string(s.assets.size()));
  }
  if (!s.mu_P.is_finite() || !s.sigma_P.is_finite()) {
    throw ScenarioError("A1", "index coefficients must be finite (bounded)");
  }
  if (s.sigma_P.dim() != s.d) throw ScenarioError("A1", "index volatility row must have d entries");
  for (std::size_t i = 0; i < s.assets.size(); ++i) {
    const auto& a = s.assets[i];
    const std::string tag = "asset " + std::to_string(i + 1);
    if (!(a.S0 > 0.0) || !std::isfinite(a.S0)) throw ScenarioError("A1", tag + ": S0 must be positive");
    if (!a.mu.is_finite() || !a.sigma.is_finite()) {
      throw ScenarioError("A1", tag + ": coefficients must be finite (bounded)");
    }
    if (a.sigma.dim() != s.d) throw ScenarioError("A1", tag + ": volatility row must have d entries");
  }

  ConstantsLedger led;
  led.K1 = options.K1;
  if (!(led.K1 > 0.0)) throw std::invalid_argument("K1 must be positive");

  led.epsilon = s.sigma_P.min_norm();
  if (!(led.epsilon >= options.ellipticity_floor)) {
    std::ostringstream msg;
    msg << "index volatility ||sigma_P|| = " << led.epsilon << " is below the ellipticity floor "
        << options.ellipticity_floor;
    throw ScenarioError("A2", msg.str());
  }

  if (!s.payoff.g) throw ScenarioError("A3", "payoff function missing");
  if (!(s.payoff.g_max >= 0.0) || !std::isfinite(s.payoff.g_max)) {
    throw ScenarioError("A3", "payoff bound g_max must be finite and nonnegative");
  }
  if (s.payoff.kind == PayoffSpec::Kind::path_discrete_monitoring && !s.payoff.monitor) {
    throw ScenarioError("A3", "path payoff needs a monitor");
  }
  for (int a : s.payoff.relevant_assets) {
    if (a < 0 || a >= s.d) throw ScenarioError("A3", "payoff refers to asset outside 1..d");
  }
  check_payoff_range(s);

  for (double t : coefficient_knots(s)) {
    const DriverAt drv = driver_at(s, t);
    led.theta_max = std::max(led.theta_max, drv.theta);
    led.sharpe_max = std::max(led.sharpe_max, std::abs(drv.mu_P) / std::sqrt(drv.sigma_norm2));
  }

  led.K2 = std::max({1.0, s.lambda * s.payoff.g_max + s.T * led.theta_max, 2.0 * s.gamma, led.sharpe_max});
  led.notes.push_back(
      "Hessian lower bound |z|^2/K2 <= z Hess(F) z^T cannot hold (Hessian is negative "
      "semidefinite); only |z Hess(F) z^T| <= K2 |z|^2 is enforced");
  if (s.gamma > led.K2) throw std::logic_error("two-sided Hessian bound violated");

  double k4 = 0.0;
  for (int a : s.payoff.relevant_assets) {
    const double m = s.assets[static_cast<std::size_t>(a)].sigma.max_norm();
    k4 += m * m;
  }
  led.K4 = s.gamma * s.gamma * k4;

  if (s.payoff.lipschitz_log) {
    const double L = *s.payoff.lipschitz_log;
    if (!std::isfinite(L) || L < 0.0) throw ScenarioError("A4", "log-Lipschitz constant must be finite");
    if (s.payoff.kind != PayoffSpec::Kind::terminal_function) {
      throw ScenarioError("A4", "log-Lipschitz data requires a terminal (Markov) payoff");
    }
    led.K3 = s.lambda * L;
    const double denom = 8.0 * (*led.K3) * (*led.K3) * led.K4;
    led.partition_bound = denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
    std::size_t blocks = 1;
    if (denom > 0.0) {
      blocks = static_cast<std::size_t>(std::max(1.0, std::ceil(s.T * denom - 1e-12)));
    }
    led.partition.resize(blocks + 1);
    for (std::size_t j = 0; j <= blocks; ++j) {
      led.partition[j] = s.T * static_cast<double>(j) / static_cast<double>(blocks);
    }
    led.partition.back() = s.T;
  }

  led.lambda_split_theoretical =
      static_cast<std::size_t>(std::max(1.0, std::ceil(32.0 * led.K1 * led.K2 * led.K2 - 1e-9)));
  led.lambda_split = split_lambda(led, s.lambda, options.lambda_split_override);
  return led;
}

std::vector<double> split_lambda(const ConstantsLedger& ledger, double lambda,
                                 std::optional<std::size_t> override_count) {
  const std::size_t J = override_count.value_or(ledger.lambda_split_theoretical);
  if (J == 0) throw std::invalid_argument("lambda split needs at least one piece");
  std::vector<double> parts(J, lambda / static_cast<double>(J));
  double head = 0.0;
  for (std::size_t j = 0; j + 1 < J; ++j) head += parts[j];
  parts.back() = lambda - head;
  return parts;
}

// ---------------------------------------------------------------------------
// Reference scenarios

Scenario reference_scenario() {
  Scenario s;
  s.name = "REF1";
  s.d = 2;
  s.P0 = 1.0;
  s.mu_P = 0.08;
  s.sigma_P = Vec{{0.2, 0.0}};
  AssetCoefficients a1;
  a1.S0 = 1.0;
  a1.mu = 0.10;
  a1.sigma = Vec{{0.15, 0.15 * std::sqrt(3.0)}};
  AssetCoefficients a2;
  a2.S0 = 1.0;
  a2.mu = 0.06;
  a2.sigma = Vec{{0.1, 0.2}};
  s.assets = {a1, a2};
  s.gamma = 1.0;
  s.lambda = 1.0;
  s.T = 1.0;
  s.payoff = payoffs::capped(0, 2.0);
  return s;
}

Scenario correlated_reference_scenario(double rho) {
  if (std::abs(rho) > 1.0) throw std::invalid_argument("|rho| must be <= 1");
  Scenario s = reference_scenario();
  s.name = "REF1-rho";
  s.assets[0].sigma = Vec{{0.3 * rho, 0.3 * std::sqrt(std::max(0.0, 1.0 - rho * rho))}};
  return s;
}

Scenario orthogonal_reference_scenario() {
  Scenario s = correlated_reference_scenario(0.0);
  s.name = "REF1-orthogonal";
  return s;
}

}  // namespace indiff
