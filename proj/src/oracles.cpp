#include "indiff/oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace indiff {

namespace {

constexpr double kTail = 12.0;

QuadratureRule golub_welsch(const Vec& off_diagonal, double mass) {
  const auto n = off_diagonal.size() + 1;
  Mat J = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    J(i, i + 1) = off_diagonal(i);
    J(i + 1, i) = off_diagonal(i);
  }
  const Eigen::SelfAdjointEigenSolver<Mat> es(J);
  QuadratureRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    r.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[static_cast<std::size_t>(i)] = mass * v0 * v0;
  }
  return r;
}

double log_price_mean(const OneDimSpec& s) {
  return std::log(s.S0) + (risk_adjusted_drift(s) - 0.5 * s.sigma_S * s.sigma_S) * s.T;
}

double terminal_price(const OneDimSpec& s, double z) {
  return std::exp(log_price_mean(s) + s.sigma_S * std::sqrt(s.T) * z);
}

std::vector<double> kink_breakpoints(const OneDimSpec& s) {
  std::vector<double> out;
  const double vol = s.sigma_S * std::sqrt(s.T);
  if (!(vol > 0.0)) return out;
  for (double k : s.kinks) {
    if (k > 0.0) out.push_back((std::log(k) - log_price_mean(s)) / vol);
  }
  return out;
}

void check_spec(const OneDimSpec& s) {
  if (!s.g) throw std::invalid_argument("one-dimensional spec needs a payoff");
  if (!(s.sigma_P > 0.0)) throw std::invalid_argument("index volatility must be positive");
  if (!(s.sigma_S >= 0.0)) throw std::invalid_argument("asset volatility must be nonnegative");
  if (std::abs(s.rho) > 1.0) throw std::invalid_argument("|rho| must not exceed 1");
  if (!(s.gamma > 0.0) || !(s.T > 0.0) || !(s.S0 > 0.0)) {
    throw std::invalid_argument("gamma, T and S0 must be positive");
  }
}

double linear_price(const OneDimSpec& s, std::size_t nodes) {
  const auto h = [&](double z) { return s.lambda * s.g(terminal_price(s, z)); };
  return normal_expectation(h, nodes, kink_breakpoints(s));
}

}  // namespace

QuadratureRule gauss_hermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("quadrature needs at least one node");
  if (n == 1) return {{0.0}, {1.0}};
  Vec b(static_cast<Eigen::Index>(n - 1));
  for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = std::sqrt(static_cast<double>(k + 1));
  return golub_welsch(b, 1.0);
}

QuadratureRule gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("quadrature needs at least one node");
  if (n == 1) return {{0.0}, {2.0}};
  Vec b(static_cast<Eigen::Index>(n - 1));
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const double m = static_cast<double>(k + 1);
    b(k) = m / std::sqrt(4.0 * m * m - 1.0);
  }
  return golub_welsch(b, 2.0);
}

double normal_expectation(const std::function<double(double)>& h, std::size_t nodes,
                          const std::vector<double>& breakpoints) {
  if (breakpoints.empty()) {
    const QuadratureRule r = gauss_hermite(nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) acc += r.weights[i] * h(r.nodes[i]);
    return acc;
  }
  std::vector<double> edges = {-kTail, kTail};
  for (double b : breakpoints) {
    if (b > -kTail && b < kTail) edges.push_back(b);
  }
  std::sort(edges.begin(), edges.end());
  const QuadratureRule r = gauss_legendre(nodes);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p];
    const double b = edges[p + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      const double z = mid + half * r.nodes[i];
      acc += half * r.weights[i] * norm * std::exp(-0.5 * z * z) * h(z);
    }
  }
  return acc;
}

double risk_adjusted_drift(const OneDimSpec& s) { return s.mu_S - s.rho * s.sigma_S * s.mu_P / s.sigma_P; }

double distortion_price(const OneDimSpec& s, std::size_t quadrature_nodes) {
  check_spec(s);
  if (std::abs(s.rho) >= 1.0) {
    throw std::invalid_argument("distortion price needs |rho| < 1; use complete_market_price");
  }
  const double a = s.gamma * (1.0 - s.rho * s.rho);
  const auto breaks = kink_breakpoints(s);
  // Shift the exponent by its value at the median so the integrand stays O(1).
  const double shift = -a * s.lambda * s.g(terminal_price(s, 0.0));
  const auto h = [&](double z) { return std::exp(-a * s.lambda * s.g(terminal_price(s, z)) - shift); };
  const double e = normal_expectation(h, quadrature_nodes, breaks);
  return -(shift + std::log(e)) / a;
}

double complete_market_price(const OneDimSpec& s, std::size_t quadrature_nodes) {
  check_spec(s);
  if (std::abs(std::abs(s.rho) - 1.0) > 1e-12) {
    throw std::invalid_argument("complete market price needs |rho| = 1; use distortion_price");
  }
  return linear_price(s, quadrature_nodes);
}

double complete_market_delta(const OneDimSpec& s, std::size_t quadrature_nodes) {
  check_spec(s);
  const double h = 1e-4 * s.S0;
  OneDimSpec up = s, down = s;
  up.S0 += h;
  down.S0 -= h;
  return (linear_price(up, quadrature_nodes) - linear_price(down, quadrature_nodes)) / (2.0 * h);
}

bool projects_to_one_dim(const Scenario& s) {
  if (s.payoff.kind != PayoffSpec::Kind::terminal_function || s.payoff.relevant_assets.size() != 1) return false;
  const auto& a = s.assets[static_cast<std::size_t>(s.payoff.relevant_assets.front())];
  return s.mu_P.is_constant() && s.sigma_P.is_constant() && a.mu.is_constant() && a.sigma.is_constant();
}

OneDimSpec project_to_one_dim(const Scenario& s) {
  if (!projects_to_one_dim(s)) {
    throw std::invalid_argument("scenario does not reduce to one asset with constant coefficients");
  }
  const int idx = s.payoff.relevant_assets.front();
  const auto& a = s.assets[static_cast<std::size_t>(idx)];
  const Vec sp = s.sigma_P(0.0);
  const Vec ss = a.sigma(0.0);
  OneDimSpec o;
  o.mu_S = a.mu(0.0);
  o.sigma_S = ss.norm();
  o.sigma_P = sp.norm();
  o.rho = o.sigma_S > 0.0 ? sp.dot(ss) / (o.sigma_S * o.sigma_P) : 0.0;
  o.rho = std::clamp(o.rho, -1.0, 1.0);
  o.mu_P = s.mu_P(0.0);
  o.gamma = s.gamma;
  o.lambda = s.lambda;
  o.T = s.T;
  o.S0 = a.S0;
  std::vector<double> base(static_cast<std::size_t>(s.d));
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = s.assets[i].S0;
  o.g = [g = s.payoff.g, base, idx](double x) {
    std::vector<double> v = base;
    v[static_cast<std::size_t>(idx)] = x;
    return g(v, {});
  };
  o.kinks = s.payoff.kinks;
  return o;
}

}  // namespace indiff
