#pragma once

// Environment laws for the random walk on a Galton-Watson tree: the offspring
// law q, the i.i.d. weight law of A, the log-Laplace transform psi and the
// analytic quantities derived from it (cumulants of the spine step, the
// Cramer series, gamma-tilde).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "rwre/error.hpp"
#include "rwre/random.hpp"

namespace rwre {

// ---------------------------------------------------------------------------
// Laws
// ---------------------------------------------------------------------------

/// Offspring law q over {0, ..., N0}; prob[k] = q_k.
struct OffspringLaw {
  std::vector<double> prob;

  static OffspringLaw deterministic(int k) {
    OffspringLaw q;
    q.prob.assign(static_cast<std::size_t>(k) + 1, 0.0);
    q.prob.back() = 1.0;
    return q;
  }

  static OffspringLaw from_pairs(const std::vector<std::pair<int, double>>& pairs) {
    OffspringLaw q;
    for (auto [k, p] : pairs) {
      if (k < 0) throw ParseError("offspring count must be >= 0");
      if (static_cast<std::size_t>(k) >= q.prob.size()) q.prob.resize(static_cast<std::size_t>(k) + 1, 0.0);
      q.prob[static_cast<std::size_t>(k)] += p;
    }
    return q;
  }

  int max_count() const noexcept {
    for (std::size_t k = prob.size(); k-- > 0;)
      if (prob[k] > 0.0) return static_cast<int>(k);
    return 0;
  }

  double mean() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) m += static_cast<double>(k) * prob[k];
    return m;
  }

  double total() const noexcept {
    double t = 0.0;
    for (double p : prob) t += p;
    return t;
  }

  double q(int k) const noexcept {
    return k >= 0 && static_cast<std::size_t>(k) < prob.size() ? prob[static_cast<std::size_t>(k)] : 0.0;
  }

  /// Schroeder case q0 + q1 > 0, as opposed to Boettcher.
  bool schroeder() const noexcept { return q(0) + q(1) > 0.0; }

  template <class Engine>
  int sample(Engine& eng) const {
    const double u = uniform01(eng);
    double acc = 0.0;
    const int top = max_count();
    for (int k = 0; k < top; ++k) {
      acc += prob[static_cast<std::size_t>(k)];
      if (u < acc) return k;
    }
    return top;
  }
};

struct WeightAtom {
  double value = 1.0;
  double prob = 1.0;
};

enum class WeightKind { Table, LogNormal };

/// Law of a single weight A. Either a finite table or log A ~ Normal(m, s2).
struct WeightLaw {
  WeightKind kind = WeightKind::Table;
  std::vector<WeightAtom> atoms;
  double m = 0.0;
  double s2 = 0.0;

  static WeightLaw table(std::vector<WeightAtom> atoms) {
    WeightLaw w;
    w.kind = WeightKind::Table;
    w.atoms = std::move(atoms);
    return w;
  }

  static WeightLaw lognormal(double m, double s2) {
    WeightLaw w;
    w.kind = WeightKind::LogNormal;
    w.m = m;
    w.s2 = s2;
    return w;
  }

  /// log E[A^t].
  double log_moment(double t) const {
    if (kind == WeightKind::LogNormal) return t * m + 0.5 * t * t * s2;
    // log-sum-exp over atoms
    double top = -INFINITY;
    for (const auto& a : atoms)
      if (a.prob > 0.0) top = std::max(top, std::log(a.prob) + t * std::log(a.value));
    if (!std::isfinite(top)) throw DomainError("weight law has no mass");
    double acc = 0.0;
    for (const auto& a : atoms)
      if (a.prob > 0.0) acc += std::exp(std::log(a.prob) + t * std::log(a.value) - top);
    return top + std::log(acc);
  }

  template <class Engine>
  double sample(Engine& eng) const {
    if (kind == WeightKind::LogNormal) {
      return std::exp(m + std::sqrt(s2) * standard_normal(eng));
    }
    const double u = uniform01(eng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
      acc += atoms[i].prob;
      if (u < acc) return atoms[i].value;
    }
    return atoms.back().value;
  }
};

enum class EnvironmentKind { TwoPoint, LogNormal, Table };

inline std::string_view to_string(EnvironmentKind k) noexcept {
  switch (k) {
    case EnvironmentKind::TwoPoint: return "two_point";
    case EnvironmentKind::LogNormal: return "lognormal";
    case EnvironmentKind::Table: return "table";
  }
  return "table";
}

/// The law of (A_i, i <= N). Weights are i.i.d. given N and independent of N.
struct EnvironmentSpec {
  std::string name = "custom";
  EnvironmentKind kind = EnvironmentKind::Table;
  OffspringLaw offspring;
  WeightLaw weights;
  bool weights_iid_given_N = true;
  bool ellipticity = true;
  double epsilon0 = 1.0;
  int N0 = 0;
  bool lattice = false;
  int cramer_order = 3;
  double tolerance = 1e-10;
  double cramer_radius = 0.0;  // 0 selects the automatic guard

  double mean_offspring() const noexcept { return offspring.mean(); }

  /// alpha = |log eps0|. Without ellipticity the 0.999 quantile of |log A|
  /// is used as a labeled surrogate.
  double alpha() const;
  bool alpha_is_surrogate() const noexcept { return !ellipticity; }
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Cumulants kappa_1..kappa_order of a finite law on `values` with
/// unnormalized log-weights `logw`. Index 0 holds log(total mass).
inline std::vector<double> finite_cumulants(const std::vector<double>& values, const std::vector<double>& logw,
                                            int order) {
  double top = -INFINITY;
  for (double lw : logw) top = std::max(top, lw);
  std::vector<double> w(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp(logw[i] - top);
    total += w[i];
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) mean += w[i] / total * values[i];
  // central moments mu_k, k = 0..order
  std::vector<double> mu(static_cast<std::size_t>(order) + 1, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean;
    double pw = 1.0;
    for (int k = 0; k <= order; ++k) {
      mu[static_cast<std::size_t>(k)] += w[i] / total * pw;
      pw *= d;
    }
  }
  mu[1] = 0.0;
  // cumulants of the centered variable via kappa_n = mu_n - sum C(n-1,k-1) kappa_k mu_{n-k}
  std::vector<double> kappa(static_cast<std::size_t>(order) + 1, 0.0);
  for (int n = 2; n <= order; ++n) {
    double acc = mu[static_cast<std::size_t>(n)];
    double binom = 1.0;  // C(n-1, k-1) for k = 1
    for (int k = 1; k < n; ++k) {
      acc -= binom * kappa[static_cast<std::size_t>(k)] * mu[static_cast<std::size_t>(n - k)];
      binom = binom * static_cast<double>(n - 1 - (k - 1)) / static_cast<double>(k);
    }
    kappa[static_cast<std::size_t>(n)] = acc;
  }
  kappa[0] = top + std::log(total);
  if (order >= 1) kappa[1] = mean;
  return kappa;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Golden-section minimization of a unimodal function on [lo, hi].
template <class F>
std::pair<double, double> golden_min(F&& f, double lo, double hi, double tol) {
  constexpr double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 500 && (b - a) > tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  double fx = f(x);
  // endpoints matter for minimizers on the boundary (t = 0)
  const double flo = f(lo);
  if (flo <= fx) return {lo, flo};
  return {x, fx};
}

template <class F>
double bisect_root(F&& f, double lo, double hi, double tol, int max_iter = 400) {
  double flo = f(lo);
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Real "gcd" of log-value differences; returns 0 when no common span exists.
inline double real_gcd(double a, double b, double tol) {
  a = std::abs(a);
  b = std::abs(b);
  for (int it = 0; it < 200; ++it) {
    if (b <= tol) return a;
    const double r = std::fmod(a, b);
    const double rr = std::min(r, b - r);
    a = b;
    b = rr;
    if (a < 1e-6) return 0.0;
  }
  return 0.0;
}

}  // namespace detail

inline double EnvironmentSpec::alpha() const {
  if (ellipticity) return std::abs(std::log(epsilon0));
  if (weights.kind == WeightKind::Table) {
    double a = 0.0;
    for (const auto& w : weights.atoms)
      if (w.prob > 0) a = std::max(a, std::abs(std::log(w.value)));
    return a;
  }
  // 0.999 quantile of |log A|, log A ~ N(m, s2)
  const double s = std::sqrt(weights.s2);
  auto tail = [&](double x) {
    return detail::normal_cdf((x - weights.m) / s) - detail::normal_cdf((-x - weights.m) / s) - 0.999;
  };
  return detail::bisect_root(tail, 0.0, std::abs(weights.m) + 12.0 * s, 1e-12);
}

// ---------------------------------------------------------------------------
// psi and cumulants
// ---------------------------------------------------------------------------

/// psi(t) = log E[sum_{|x|=1} A(x)^t] = log(E[N] E[A^t]).
inline double psi(const EnvironmentSpec& spec, double t) {
  const double mean_n = spec.mean_offspring();
  if (!(mean_n > 0.0)) throw DomainError("psi: E[N] must be positive");
  const double v = std::log(mean_n) + spec.weights.log_moment(t);
  if (!std::isfinite(v)) throw DomainError("psi diverges at t = " + std::to_string(t));
  return v;
}

/// k-th derivative of psi at t (k >= 1), exact for both weight families.
inline double psi_derivative(const EnvironmentSpec& spec, double t, int k) {
  if (k < 1) return psi(spec, t);
  if (spec.weights.kind == WeightKind::LogNormal) {
    if (k == 1) return spec.weights.m + t * spec.weights.s2;
    if (k == 2) return spec.weights.s2;
    return 0.0;
  }
  std::vector<double> values, logw;
  for (const auto& a : spec.weights.atoms) {
    if (a.prob <= 0) continue;
    values.push_back(std::log(a.value));
    logw.push_back(std::log(a.prob) + t * std::log(a.value));
  }
  return detail::finite_cumulants(values, logw, k)[static_cast<std::size_t>(k)];
}

/// Numerical check of calibration psi(1) = psi'(1) = 0.
inline bool is_calibrated(const EnvironmentSpec& spec) {
  return std::abs(psi(spec, 1.0)) < spec.tolerance && std::abs(psi_derivative(spec, 1.0, 1)) < spec.tolerance;
}

/// Lattice detection. Tables: gcd of log-value differences with tolerance 1e-9.
inline bool detect_lattice(const WeightLaw& w) {
  if (w.kind == WeightKind::LogNormal) return false;
  std::vector<double> logs;
  for (const auto& a : w.atoms)
    if (a.prob > 0) logs.push_back(std::log(a.value));
  std::sort(logs.begin(), logs.end());
  logs.erase(std::unique(logs.begin(), logs.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }),
             logs.end());
  if (logs.size() <= 2) return true;
  double g = logs[1] - logs[0];
  for (std::size_t i = 2; i < logs.size() && g > 0.0; ++i) g = detail::real_gcd(g, logs[i] - logs[0], 1e-9);
  return g > 0.0;
}

/// Analytic quantities of a spec.
struct Analytics {
  double psi0 = 0.0;
  double sigma2 = 0.0;
  /// cumulants[j] = j-th derivative of x -> psi(1 - x) at 0, j = 0..order.
  /// These are the cumulants of the spine step S_1 (index 0 is psi(1)).
  std::vector<double> cumulants;
  int cramer_order = 3;
  /// lambda(x) = sum_k lambda_coeffs[k] x^k.
  std::vector<double> lambda_coeffs;
  double radius = INFINITY;
  double gamma_tilde = NAN;
  std::function<double(double)> Jtilde;

  double lambda(double x) const {
    double acc = 0.0;
    for (std::size_t k = lambda_coeffs.size(); k-- > 0;) acc = acc * x + lambda_coeffs[k];
    return acc;
  }
};

/// Cumulants u_j of the spine step, j = 0..order, for any supported spec.
inline std::vector<double> spine_cumulants(const EnvironmentSpec& spec, int order) {
  std::vector<double> u(static_cast<std::size_t>(order) + 1, 0.0);
  u[0] = psi(spec, 1.0);
  if (spec.weights.kind == WeightKind::LogNormal) {
    // psi(1 - x) = log E[N] + (1 - x) m + (1 - x)^2 s2 / 2
    if (order >= 1) u[1] = -(spec.weights.m + spec.weights.s2);
    if (order >= 2) u[2] = spec.weights.s2;
    return u;
  }
  std::vector<double> values, logw;
  for (const auto& a : spec.weights.atoms) {
    if (a.prob <= 0) continue;
    values.push_back(-std::log(a.value));  // S_1 = V(x) = -log A(x)
    logw.push_back(std::log(a.prob) + std::log(a.value));
  }
  const auto k = detail::finite_cumulants(values, logw, order);
  for (int j = 1; j <= order; ++j) u[static_cast<std::size_t>(j)] = k[static_cast<std::size_t>(j)];
  return u;
}

namespace detail {

/// Truncated product of power series (coefficients by degree).
inline std::vector<double> series_mul(const std::vector<double>& a, const std::vector<double>& b, std::size_t deg) {
  std::vector<double> c(deg + 1, 0.0);
  for (std::size_t i = 0; i < a.size() && i <= deg; ++i)
    for (std::size_t j = 0; j < b.size() && i + j <= deg; ++j) c[i + j] += a[i] * b[j];
  return c;
}

/// Coefficients of the rate function I(y) = sup_s {s y - K(s)} with
/// K(s) = sum_{j>=2} kappa_j s^j / j!, obtained by reverting y = K'(s).
/// Returned vector holds I's coefficients by degree up to `deg`.
inline std::vector<double> rate_series(const std::vector<double>& kappa, std::size_t deg) {
  const double k2 = kappa.at(2);
  const std::size_t sdeg = deg - 1;  // s(y) needed to degree deg-1
  std::vector<double> s(sdeg + 1, 0.0);
  if (sdeg >= 1) s[1] = 1.0 / k2;
  for (std::size_t iter = 0; iter < sdeg + 1; ++iter) {
    // y = k2 s + sum_{j>=3} kappa_j s^{j-1}/(j-1)!
    std::vector<double> rhs(sdeg + 1, 0.0);
    if (sdeg >= 1) rhs[1] = 1.0;
    std::vector<double> pw = s;  // s^1
    double fact = 1.0;           // (j-1)!
    for (std::size_t j = 3; j < kappa.size(); ++j) {
      pw = series_mul(pw, s, sdeg);  // s^{j-1}
      fact *= static_cast<double>(j - 1);
      for (std::size_t d = 0; d <= sdeg; ++d) rhs[d] -= kappa[j] / fact * pw[d];
    }
    for (std::size_t d = 0; d <= sdeg; ++d) s[d] = rhs[d] / k2;
  }
  std::vector<double> rate(deg + 1, 0.0);
  for (std::size_t k = 1; k <= sdeg; ++k) rate[k + 1] = s[k] / static_cast<double>(k + 1);
  return rate;
}

}  // namespace detail

/// J-tilde(a) = inf_{t >= 0} {psi(-t) - a t}.
inline double Jtilde(const EnvironmentSpec& spec, double a) {
  auto phi = [&](double t) { return psi(spec, -t) - a * t; };
  double hi = 1.0;
  while (hi < 1e4 && phi(2.0 * hi) <= phi(hi)) hi *= 2.0;
  if (hi >= 1e4) return phi(hi);  // decreasing without bound at the search edge
  hi *= 2.0;
  return detail::golden_min(phi, 0.0, hi, 1e-10).second;
}

/// gamma-tilde = sup{a : J-tilde(a) > 0}, by bisection on a in (0, 10 sigma^2 + 10).
inline double gamma_tilde(const EnvironmentSpec& spec) {
  const double sigma2 = psi_derivative(spec, 1.0, 2);
  const double hi = 10.0 * sigma2 + 10.0;
  if (!(Jtilde(spec, 0.0) > 0.0) || !(Jtilde(spec, hi) < 0.0))
    throw ConvergenceError("gamma_tilde: cannot bracket the root of J-tilde in (0, 10 sigma^2 + 10)");
  return detail::bisect_root([&](double a) { return Jtilde(spec, a); }, 0.0, hi, 1e-10);
}

/// Full analytics. The Cramer series uses the convention
///   lambda(x) = -(I(x) - x^2 / (2 sigma^2)) / x^3,
/// I the rate function of S_1; equivalently lambda(x) = sigma^-3 lambda_P(x / sigma)
/// with lambda_P the series in Petrov's normalization (lambda_P(0) = kappa_3 / (6 sigma^3)).
inline Analytics cumulants(const EnvironmentSpec& spec, int order) {
  if (order < 2) throw DomainError("cumulants: order must be >= 2");
  Analytics an;
  an.cramer_order = spec.cramer_order;
  const int need = std::max(order, spec.cramer_order + 2);
  auto u = spine_cumulants(spec, need);
  an.psi0 = psi(spec, 0.0);
  an.sigma2 = u[2];
  if (!(an.sigma2 > 0.0)) throw DomainError("cumulants: sigma^2 must be positive");
  // lambda_k = -(coefficient of x^{k+3} in I)
  const std::size_t deg = static_cast<std::size_t>(spec.cramer_order) + 2;
  std::vector<double> kappa(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(deg) + 1);
  kappa[0] = 0.0;
  kappa[1] = 0.0;  // centered step
  const auto rate = detail::rate_series(kappa, deg);
  an.lambda_coeffs.assign(static_cast<std::size_t>(spec.cramer_order), 0.0);
  for (std::size_t k = 0; k < an.lambda_coeffs.size(); ++k) an.lambda_coeffs[k] = -rate[k + 3];
  u.resize(static_cast<std::size_t>(order) + 1);
  an.cumulants = std::move(u);

  if (spec.cramer_radius > 0.0) {
    an.radius = spec.cramer_radius;
  } else if (spec.weights.kind == WeightKind::LogNormal) {
    an.radius = INFINITY;  // lambda vanishes identically
  } else {
    double lo = INFINITY;
    for (const auto& a : spec.weights.atoms)
      if (a.prob > 0) lo = std::min(lo, std::abs(std::log(a.value)));
    an.radius = 0.5 * lo;
  }
  an.gamma_tilde = gamma_tilde(spec);
  an.Jtilde = [spec](double a) { return Jtilde(spec, a); };
  return an;
}

inline Analytics analyze(const EnvironmentSpec& spec) { return cumulants(spec, std::max(4, spec.cramer_order + 2)); }

/// f(x) = 1 - x / (2 sigma^2) + x^2 lambda(x), truncated at the spec's Cramer order.
inline double cramer_f(const Analytics& an, double x) {
  if (!(std::abs(x) < an.radius))
    throw DomainError("cramer_f: |x| = " + std::to_string(std::abs(x)) + " exceeds radius guard " +
                      std::to_string(an.radius));
  return 1.0 - x / (2.0 * an.sigma2) + x * x * an.lambda(x);
}

/// g(x) = f(x) - 1.
inline double cramer_g(const Analytics& an, double x) { return cramer_f(an, x) - 1.0; }

// ---------------------------------------------------------------------------
// Calibrated environments
// ---------------------------------------------------------------------------

inline void finalize(EnvironmentSpec& spec) {
  spec.N0 = spec.offspring.max_count();
  spec.lattice = detect_lattice(spec.weights);
  if (spec.weights.kind == WeightKind::Table) {
    double eps = 1.0;
    for (const auto& a : spec.weights.atoms)
      if (a.prob > 0) eps = std::min(eps, std::min(a.value, 1.0 / a.value));
    spec.epsilon0 = eps;
  }
}

/// Two-point environment with offspring law q: A in {a, a^-ratio}, solving
/// E[sum A] = 1 and E[sum A log A] = 0. ratio = 1 is the symmetric case
/// (S_1 = +-log a with probability 1/2 each when q(2) = 1).
inline EnvironmentSpec calibrate_two_point(const OffspringLaw& q, bool symmetric, double ratio = 2.0) {
  const double mu = q.mean();
  if (!(mu > 1.0)) throw DomainError("calibrate_two_point: offspring law must be supercritical");
  const double r = symmetric ? 1.0 : ratio;
  if (!(r > 0.0)) throw DomainError("calibrate_two_point: ratio must be positive");
  // spine law: P(S_1 = -log a) = pi = r / (1 + r); mass condition pi/a + (1-pi) a^r = mu
  const double pi = r / (1.0 + r);
  auto mass = [&](double a) { return pi / a + (1.0 - pi) * std::pow(a, r) - mu; };
  double a;
  if (symmetric) {
    a = (mu - std::sqrt(mu * mu - 1.0));  // root of a^2 - 2 mu a + 1 = 0 with pi = 1/2
  } else {
    a = detail::bisect_root(mass, 1e-12, 1.0, 1e-15);
  }
  const double b = std::pow(a, -r);
  const double pa = pi / (mu * a);
  EnvironmentSpec spec;
  spec.name = symmetric && q.prob.size() == 3 && q.prob[2] == 1.0 ? "sym2" : "two_point";
  spec.kind = EnvironmentKind::TwoPoint;
  spec.offspring = q;
  spec.weights = WeightLaw::table({{a, pa}, {b, 1.0 - pa}});
  spec.ellipticity = true;
  finalize(spec);
  return spec;
}

/// sym2: N = 2, A in {2 - sqrt 3, 2 + sqrt 3} with P(A = 2 - sqrt 3) = (2 + sqrt 3) / 4.
inline EnvironmentSpec calibrate_two_point(bool symmetric) {
  auto spec = calibrate_two_point(OffspringLaw::deterministic(2), symmetric);
  if (symmetric) {
    // closed form, exact to rounding
    const double s3 = std::sqrt(3.0);
    spec.weights = WeightLaw::table({{2.0 - s3, (2.0 + s3) / 4.0}, {2.0 + s3, (2.0 - s3) / 4.0}});
    spec.name = "sym2";
  } else {
    spec.name = "asym2";
  }
  finalize(spec);
  return spec;
}

/// Log-normal weights calibrated for offspring law q: s2 = 2 log E[N], m = -s2.
inline EnvironmentSpec calibrate_lognormal(const OffspringLaw& q) {
  const double mu = q.mean();
  if (!(mu > 1.0)) throw DomainError("calibrate_lognormal: offspring law must be supercritical");
  EnvironmentSpec spec;
  spec.name = "lognormal";
  spec.kind = EnvironmentKind::LogNormal;
  spec.offspring = q;
  const double s2 = 2.0 * std::log(mu);
  spec.weights = WeightLaw::lognormal(-s2, s2);
  spec.ellipticity = false;
  spec.epsilon0 = 0.0;
  finalize(spec);
  return spec;
}

/// gauss2: N = 2, log A ~ Normal(-2 log 2, 2 log 2). Ellipticity off.
inline EnvironmentSpec calibrate_lognormal() {
  auto spec = calibrate_lognormal(OffspringLaw::deterministic(2));
  spec.name = "gauss2";
  return spec;
}

/// A = 1 everywhere (V = 0). Not calibrated; used for plumbing checks.
inline EnvironmentSpec flat_environment(const OffspringLaw& q) {
  EnvironmentSpec spec;
  spec.name = "flat";
  spec.kind = EnvironmentKind::Table;
  spec.offspring = q;
  spec.weights = WeightLaw::table({{1.0, 1.0}});
  spec.ellipticity = true;
  finalize(spec);
  return spec;
}

/// Throws if the spec breaks a structural invariant.
inline void validate(const EnvironmentSpec& spec) {
  if (std::abs(spec.offspring.total() - 1.0) > 1e-12) throw DomainError("offspring law does not sum to 1");
  for (double p : spec.offspring.prob)
    if (p < 0) throw DomainError("negative offspring probability");
  if (!(spec.mean_offspring() > 1.0)) throw DomainError("E[N] must exceed 1 (supercritical tree)");
  if (spec.weights.kind == WeightKind::Table) {
    double t = 0.0;
    for (const auto& a : spec.weights.atoms) {
      if (!(a.value > 0.0)) throw DomainError("weights must be positive");
      if (a.prob < 0) throw DomainError("negative weight probability");
      t += a.prob;
    }
    if (std::abs(t - 1.0) > 1e-12) throw DomainError("weight law does not sum to 1");
    if (spec.ellipticity) {
      for (const auto& a : spec.weights.atoms)
        if (a.prob > 0 && (a.value < spec.epsilon0 * (1 - 1e-12) || a.value > (1 + 1e-12) / spec.epsilon0))
          throw DomainError("weight outside [eps0, 1/eps0]");
    }
  } else {
    if (!(spec.weights.s2 > 0.0)) throw DomainError("log-normal scale must be positive");
    if (spec.ellipticity) throw DomainError("log-normal weights cannot satisfy ellipticity");
  }
  if (spec.ellipticity && spec.offspring.max_count() > spec.N0) throw DomainError("offspring exceeds N0");
}

// ---------------------------------------------------------------------------
// Flat key-value config
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'");
  return x;
}

namespace detail {

/// "(a, b), (c, d)" -> {{a, b}, {c, d}}
inline std::vector<std::pair<double, double>> parse_pairs(std::string_view s) {
  std::vector<std::pair<double, double>> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = s.find('(', pos);
    if (open == std::string_view::npos) break;
    const auto close = s.find(')', open);
    const auto comma = s.find(',', open);
    if (close == std::string_view::npos || comma == std::string_view::npos || comma > close)
      throw ParseError("malformed pair list: '" + std::string(s) + "'");
    out.emplace_back(parse_double(s.substr(open + 1, comma - open - 1)),
                     parse_double(s.substr(comma + 1, close - comma - 1)));
    pos = close + 1;
  }
  if (out.empty()) throw ParseError("empty pair list");
  return out;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace detail

/// Canonical text form. Doubles use shortest round-trip representation so
/// parse(serialize(spec)) reproduces every field bit for bit.
inline std::string serialize(const EnvironmentSpec& spec) {
  std::ostringstream os;
  os << "environment.name = " << spec.name << "\n";
  os << "environment.kind = " << to_string(spec.kind) << "\n";
  os << "environment.q = ";
  bool first = true;
  for (std::size_t k = 0; k < spec.offspring.prob.size(); ++k) {
    if (spec.offspring.prob[k] == 0.0) continue;
    if (!first) os << ", ";
    os << "(" << k << ", " << format_double(spec.offspring.prob[k]) << ")";
    first = false;
  }
  os << "\n";
  os << "environment.weights = ";
  if (spec.weights.kind == WeightKind::LogNormal) {
    os << "(" << format_double(spec.weights.m) << ", " << format_double(spec.weights.s2) << ")";
  } else {
    first = true;
    for (const auto& a : spec.weights.atoms) {
      if (!first) os << ", ";
      os << "(" << format_double(a.value) << ", " << format_double(a.prob) << ")";
      first = false;
    }
  }
  os << "\n";
  os << "environment.ellipticity = " << (spec.ellipticity ? "on" : "off") << "\n";
  os << "environment.epsilon0 = " << format_double(spec.epsilon0) << "\n";
  os << "environment.N0 = " << spec.N0 << "\n";
  os << "analytics.cramer_order = " << spec.cramer_order << "\n";
  os << "analytics.tolerance = " << format_double(spec.tolerance) << "\n";
  os << "analytics.radius = " << format_double(spec.cramer_radius) << "\n";
  return os.str();
}

/// Parses the flat format; unknown keys are rejected, missing optional keys
/// take defaults. '#' starts a comment.
inline EnvironmentSpec parse_spec(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value': " + t);
    kv[detail::trim(std::string_view(t).substr(0, eq))] = detail::trim(std::string_view(t).substr(eq + 1));
    if (eol == text.size()) break;
  }
  static const char* known[] = {"environment.name",       "environment.kind",     "environment.q",
                                "environment.weights",    "environment.ellipticity", "environment.epsilon0",
                                "environment.N0",         "analytics.cramer_order", "analytics.tolerance",
                                "analytics.radius"};
  for (const auto& [k, v] : kv) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) == std::end(known))
      throw ParseError("unknown key: " + k);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ParseError("missing key: " + k);
    return it->second;
  };

  EnvironmentSpec spec;
  spec.name = kv.count("environment.name") ? kv["environment.name"] : "custom";
  const auto& kind = need("environment.kind");
  if (kind == "two_point")
    spec.kind = EnvironmentKind::TwoPoint;
  else if (kind == "lognormal")
    spec.kind = EnvironmentKind::LogNormal;
  else if (kind == "table")
    spec.kind = EnvironmentKind::Table;
  else
    throw ParseError("environment.kind must be two_point, lognormal or table");

  std::vector<std::pair<int, double>> q;
  for (auto [k, p] : detail::parse_pairs(need("environment.q"))) {
    if (k != std::floor(k)) throw ParseError("offspring count must be an integer");
    q.emplace_back(static_cast<int>(k), p);
  }
  spec.offspring = OffspringLaw::from_pairs(q);

  const auto w = detail::parse_pairs(need("environment.weights"));
  if (spec.kind == EnvironmentKind::LogNormal) {
    if (w.size() != 1) throw ParseError("lognormal weights take a single (m, s2) pair");
    spec.weights = WeightLaw::lognormal(w[0].first, w[0].second);
  } else {
    std::vector<WeightAtom> atoms;
    for (auto [v, p] : w) atoms.push_back({v, p});
    if (spec.kind == EnvironmentKind::TwoPoint && atoms.size() != 2)
      throw ParseError("two_point weights need exactly two atoms");
    spec.weights = WeightLaw::table(std::move(atoms));
  }
  finalize(spec);
  if (auto it = kv.find("environment.ellipticity"); it != kv.end()) {
    if (it->second != "on" && it->second != "off") throw ParseError("environment.ellipticity must be on or off");
    spec.ellipticity = it->second == "on";
  } else {
    spec.ellipticity = spec.kind != EnvironmentKind::LogNormal;
  }
  if (auto it = kv.find("environment.epsilon0"); it != kv.end()) spec.epsilon0 = parse_double(it->second);
  if (spec.kind == EnvironmentKind::LogNormal && !kv.count("environment.epsilon0")) spec.epsilon0 = 0.0;
  if (auto it = kv.find("environment.N0"); it != kv.end()) spec.N0 = static_cast<int>(parse_double(it->second));
  if (auto it = kv.find("analytics.cramer_order"); it != kv.end())
    spec.cramer_order = static_cast<int>(parse_double(it->second));
  if (auto it = kv.find("analytics.tolerance"); it != kv.end()) spec.tolerance = parse_double(it->second);
  if (auto it = kv.find("analytics.radius"); it != kv.end()) spec.cramer_radius = parse_double(it->second);
  validate(spec);
  return spec;
}

}  // namespace rwre
