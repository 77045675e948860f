#pragma once

// The one-dimensional walk S of the many-to-one formula,
//   E[sum_{|x|=n} e^{-V(x)} F(V(x_1), ..., V(x_n))] = E[F(S_1, ..., S_n)],
// and Monte Carlo checks of the classical fluctuation estimates used for it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rwre/envspec.hpp"
#include "rwre/error.hpp"
#include "rwre/parallel.hpp"
#include "rwre/random.hpp"
#include "rwre/stats.hpp"

namespace rwre {

// ===========================================================================
// Increment law
// ===========================================================================

/// Law of S_1: a finite table or a Gaussian.
struct IncrementLaw {
  bool gaussian = false;
  std::vector<double> values;
  std::vector<double> probs;
  double mu = 0.0;   // Gaussian mean
  double var = 0.0;  // Gaussian variance

  double mean() const {
    if (gaussian) return mu;
    double m = 0;
    for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
    return m;
  }

  double variance() const {
    if (gaussian) return var;
    const double m = mean();
    double v = 0;
    for (std::size_t i = 0; i < values.size(); ++i) v += probs[i] * (values[i] - m) * (values[i] - m);
    return v;
  }

  /// log E[e^{theta S_1}].
  double log_mgf(double theta) const {
    if (gaussian) return theta * mu + 0.5 * theta * theta * var;
    double top = -INFINITY;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (probs[i] > 0) top = std::max(top, std::log(probs[i]) + theta * values[i]);
    double acc = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (probs[i] > 0) acc += std::exp(std::log(probs[i]) + theta * values[i] - top);
    return top + std::log(acc);
  }

  /// Exponentially tilted law, density proportional to e^{theta s}.
  IncrementLaw tilted(double theta) const {
    IncrementLaw q = *this;
    if (gaussian) {
      q.mu = mu + theta * var;
      return q;
    }
    const double lm = log_mgf(theta);
    for (std::size_t i = 0; i < values.size(); ++i) q.probs[i] = std::exp(std::log(probs[i]) + theta * values[i] - lm);
    return q;
  }

  template <class Engine>
  double sample(Engine& eng) const {
    if (gaussian) return mu + std::sqrt(var) * standard_normal(eng);
    const double u = uniform01(eng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      acc += probs[i];
      if (u < acc) return values[i];
    }
    return values.back();
  }

  /// Largest |S_1| on the support (infinite for the Gaussian).
  double max_abs() const {
    if (gaussian) return INFINITY;
    double m = 0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// P(S_1 = -log a) = E[N] P(A = a) a for tables; for log A ~ N(m, s2) the
/// tilt by e^{-V} gives S_1 ~ N(-m - s2, s2).
inline IncrementLaw spine_increment_law(const EnvironmentSpec& spec) {
  if (!is_calibrated(spec)) throw DomainError("spine_increment_law: spec is not calibrated (mass would not sum to 1)");
  IncrementLaw law;
  if (spec.weights.kind == WeightKind::LogNormal) {
    law.gaussian = true;
    law.mu = -spec.weights.m - spec.weights.s2;
    law.var = spec.weights.s2;
    return law;
  }
  const double mean_n = spec.mean_offspring();
  for (const auto& a : spec.weights.atoms) {
    if (a.prob <= 0) continue;
    law.values.push_back(-std::log(a.value));
    law.probs.push_back(mean_n * a.prob * a.value);
  }
  return law;
}

// ===========================================================================
// Paths and their statistics
// ===========================================================================

/// Statistics of S_0 = x0, S_1, ..., S_m. Passage times use n >= 1:
/// tau+_x = inf{n >= 1 : S_n >= x}, tau-_x = inf{n >= 1 : S_n <= x};
/// the running max/min are over 1..m; Y+-(k) = sum_{i=1}^k e^{+-S_i}.
struct PathStats {
  double max = -INFINITY;
  double min = INFINITY;
  double Yplus = 0.0;
  double Yminus = 0.0;
};

class SpinePath {
 public:
  explicit SpinePath(double x0 = 0.0) { path_.push_back(x0); }

  template <class Engine>
  double step(const IncrementLaw& law, Engine& eng) {
    push(path_.back() + law.sample(eng));
    return path_.back();
  }

  void push(double s) {
    path_.push_back(s);
    stats_.max = std::max(stats_.max, s);
    stats_.min = std::min(stats_.min, s);
    stats_.Yplus += std::exp(s);
    stats_.Yminus += std::exp(-s);
  }

  std::size_t length() const noexcept { return path_.size() - 1; }
  double current() const noexcept { return path_.back(); }
  std::span<const double> values() const noexcept { return path_; }
  const PathStats& stats() const noexcept { return stats_; }

  /// First n >= 1 with S_n >= x (0 if none yet).
  std::size_t tau_plus(double x) const {
    for (std::size_t i = 1; i < path_.size(); ++i)
      if (path_[i] >= x) return i;
    return 0;
  }
  std::size_t tau_minus(double x) const {
    for (std::size_t i = 1; i < path_.size(); ++i)
      if (path_[i] <= x) return i;
    return 0;
  }

 private:
  std::vector<double> path_;
  PathStats stats_;
};

/// Statistics recomputed from a stored path (checks the streaming values).
inline PathStats recompute_stats(std::span<const double> path) {
  PathStats s;
  for (std::size_t i = 1; i < path.size(); ++i) {
    s.max = std::max(s.max, path[i]);
    s.min = std::min(s.min, path[i]);
    s.Yplus += std::exp(path[i]);
    s.Yminus += std::exp(-path[i]);
  }
  return s;
}

// ===========================================================================
// Many-to-one
// ===========================================================================

/// A functional of (V(x_1), ..., V(x_n)) or (S_1, ..., S_n).
struct PathFunctional {
  std::string name;
  bool bounded = true;
  std::function<double(std::span<const double>)> f;
};

inline std::vector<PathFunctional> functional_library() {
  using S = std::span<const double>;
  auto last = [](S s) { return s.empty() ? 0.0 : s.back(); };
  auto mx = [](S s) { return s.empty() ? -INFINITY : *std::max_element(s.begin(), s.end()); };
  auto mn = [](S s) { return s.empty() ? INFINITY : *std::min_element(s.begin(), s.end()); };
  std::vector<PathFunctional> lib;
  lib.push_back({"one", true, [](S) { return 1.0; }});
  lib.push_back({"all_positive", true, [mn](S s) { return mn(s) > 0 ? 1.0 : 0.0; }});
  lib.push_back({"max_le_1", true, [mx](S s) { return mx(s) <= 1.0 ? 1.0 : 0.0; }});
  lib.push_back({"end_le_0", true, [last](S s) { return last(s) <= 0 ? 1.0 : 0.0; }});
  lib.push_back({"end_in_window", true, [last](S s) { return last(s) > -1.0 && last(s) <= 1.0 ? 1.0 : 0.0; }});
  lib.push_back({"min_ge_minus_1", true, [mn](S s) { return mn(s) >= -1.0 ? 1.0 : 0.0; }});
  lib.push_back({"exp_minus_abs_end", true, [last](S s) { return std::exp(-std::abs(last(s))); }});
  lib.push_back({"cos_end", true, [last](S s) { return std::cos(last(s)); }});
  lib.push_back({"ends_below_max", true, [last, mx](S s) { return last(s) < mx(s) ? 1.0 : 0.0; }});
  lib.push_back({"logistic_sum", true, [](S s) {
                   const double t = std::accumulate(s.begin(), s.end(), 0.0);
                   return 1.0 / (1.0 + std::exp(-t));
                 }});
  lib.push_back({"end_squared", false, [last](S s) { return last(s) * last(s); }});
  return lib;
}

struct MtoResult {
  double lhs = 0.0, lhs_stderr = 0.0;
  double rhs = 0.0, rhs_stderr = 0.0;
  bool exact = false;
  bool unbounded = false;
  std::uint64_t samples = 0;
};

namespace detail {

inline std::uint64_t checked_pow(std::uint64_t b, int n, std::uint64_t cap) {
  std::uint64_t r = 1;
  for (int i = 0; i < n; ++i) {
    if (b != 0 && r > cap / b) return cap + 1;
    r *= b;
  }
  return r;
}

}  // namespace detail

/// Exact enumeration for table weights. The left side uses linearity along
/// rays, E[sum_{|x|=n} G(A along x)] = E[N]^n E[G(A_1..A_n)] with A_i i.i.d.;
/// the right side sums over the increment table.
inline MtoResult mto_exact(const EnvironmentSpec& spec, int n, const PathFunctional& F,
                           std::uint64_t max_paths = 10'000'000) {
  if (spec.weights.kind != WeightKind::Table) throw RefusedError("mto_exact: needs a finite weight table");
  const auto law = spine_increment_law(spec);
  const auto& atoms = spec.weights.atoms;
  if (detail::checked_pow(atoms.size(), n, max_paths) > max_paths ||
      detail::checked_pow(law.values.size(), n, max_paths) > max_paths)
    throw CapacityError("mto_exact: more than " + std::to_string(max_paths) + " paths");
  MtoResult r;
  r.exact = true;
  r.unbounded = !F.bounded;
  const double mean_n = spec.mean_offspring();
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  std::vector<double> v(static_cast<std::size_t>(n));
  CompensatedSum lhs, rhs;
  auto enumerate = [&](std::size_t k, auto&& visit) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      visit();
      std::size_t i = 0;
      while (i < idx.size() && ++idx[i] == k) idx[i++] = 0;
      if (i == idx.size()) break;
    }
  };
  enumerate(atoms.size(), [&] {
    double w = std::pow(mean_n, n), V = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& a = atoms[idx[static_cast<std::size_t>(i)]];
      w *= a.prob * a.value;  // e^{-V} factor along the ray
      V -= std::log(a.value);
      v[static_cast<std::size_t>(i)] = V;
    }
    lhs.add(w * F.f(v));
  });
  enumerate(law.values.size(), [&] {
    double w = 1.0, s = 0.0;
    for (int i = 0; i < n; ++i) {
      w *= law.probs[idx[static_cast<std::size_t>(i)]];
      s += law.values[idx[static_cast<std::size_t>(i)]];
      v[static_cast<std::size_t>(i)] = s;
    }
    rhs.add(w * F.f(v));
  });
  r.lhs = lhs.value();
  r.rhs = rhs.value();
  return r;
}

/// Two-sided Monte Carlo: the left side grows whole trees to depth n, the
/// right side samples the spine walk.
inline MtoResult mto_monte_carlo(const EnvironmentSpec& spec, int n, const PathFunctional& F, std::uint64_t samples,
                                 std::uint64_t seed, unsigned threads = 1) {
  const auto law = spine_increment_law(spec);
  MtoResult r;
  r.unbounded = !F.bounded;
  r.samples = samples;
  const std::size_t chunks = 64;
  std::vector<RunningStats> L(chunks), R(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 eng(derive_seed(seed, "mto", c));
    const std::uint64_t lo = samples * c / chunks, hi = samples * (c + 1) / chunks;
    std::vector<double> v(static_cast<std::size_t>(n));
    // depth-first over one tree, carrying the potential along the ray
    struct Frame {
      int depth;
      double V, w;
    };
    std::vector<Frame> stack, kids;
    std::vector<double> ray(static_cast<std::size_t>(n) + 1);
    for (std::uint64_t s = lo; s < hi; ++s) {
      double sum = 0.0;
      stack.clear();
      stack.push_back({0, 0.0, 1.0});
      while (!stack.empty()) {
        const Frame fr = stack.back();
        stack.pop_back();
        if (fr.depth > 0) ray[static_cast<std::size_t>(fr.depth) - 1] = fr.V;
        if (fr.depth == n) {
          sum += std::exp(-fr.V) * F.f(std::span<const double>(ray.data(), static_cast<std::size_t>(n)));
          continue;
        }
        const int k = spec.offspring.sample(eng);
        // push in reverse so children are processed left to right; ray
        // entries are rewritten before every use
        kids.clear();
        for (int i = 0; i < k; ++i) kids.push_back({fr.depth + 1, fr.V - std::log(spec.weights.sample(eng)), 1.0});
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
      }
      L[c].add(sum);
      double S = 0.0;
      for (int i = 0; i < n; ++i) {
        S += law.sample(eng);
        v[static_cast<std::size_t>(i)] = S;
      }
      R[c].add(F.f(v));
    }
  });
  RunningStats lt, rt;
  for (std::size_t c = 0; c < chunks; ++c) {
    lt.merge(L[c]);
    rt.merge(R[c]);
  }
  r.lhs = lt.mean();
  r.lhs_stderr = lt.stderr_mean();
  r.rhs = rt.mean();
  r.rhs_stderr = rt.stderr_mean();
  return r;
}

/// Exact enumeration when it fits, Monte Carlo otherwise.
inline MtoResult mto_check(const EnvironmentSpec& spec, int n, const PathFunctional& F, std::uint64_t samples,
                           std::uint64_t seed, unsigned threads = 1) {
  if (spec.weights.kind == WeightKind::Table && n <= 8) {
    try {
      return mto_exact(spec, n, F);
    } catch (const CapacityError&) {
    }
  }
  return mto_monte_carlo(spec, n, F, samples, seed, threads);
}

// ===========================================================================
// Ballot: F_m = E[e^{S_m} 1{max_{1<=i<=m} S_i <= 0}]
// ===========================================================================

struct BallotResult {
  double F = 0.0;
  double stderr_F = 0.0;
  double normalized = 0.0;  // F (m+1)^{3/2}
  bool low_precision = false;
  std::uint64_t particles = 0;
  std::uint64_t replicates = 0;
};

/// Exact F_m for a finite increment table by dynamic programming over the
/// lattice of reachable values (small m only; used as a test oracle).
inline double ballot_F_exact(const IncrementLaw& law, int m) {
  if (law.gaussian) throw RefusedError("ballot_F_exact: needs a finite table");
  std::vector<std::pair<double, double>> cur{{0.0, 1.0}};  // (value, probability)
  for (int k = 0; k < m; ++k) {
    std::vector<std::pair<double, double>> next;
    for (auto [s, p] : cur)
      for (std::size_t i = 0; i < law.values.size(); ++i) {
        const double t = s + law.values[i];
        if (t <= 1e-12) next.emplace_back(t, p * law.probs[i]);
      }
    std::sort(next.begin(), next.end());
    cur.clear();
    for (auto& e : next) {
      if (!cur.empty() && std::abs(cur.back().first - e.first) < 1e-9)
        cur.back().second += e.second;
      else
        cur.push_back(e);
    }
  }
  double F = 0;
  for (auto [s, p] : cur) F += p * std::exp(s);
  return F;
}

namespace detail {

/// Mills ratio Phi(-y) / phi(y), continued fraction in the tail.
inline double mills_ratio(double y) {
  if (y < 5.0) return 0.5 * std::erfc(y / std::numbers::sqrt2) * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * y * y);
  double f = 0.0;
  for (int k = 80; k >= 1; --k) f = k / (y + f);
  return 1.0 / (y + f);
}

}  // namespace detail

/// F_0, ..., F_m exactly, by the Baxter-Spitzer identity
///   sum_n t^n F_n = exp(sum_k t^k / k E[e^{S_k}; S_k <= 0]),
/// i.e. n F_n = sum_{k=1..n} a_k F_{n-k}. Gaussian or two-atom laws.
inline std::vector<double> ballot_F_spitzer(const IncrementLaw& law, int m) {
  if (m < 0) throw DomainError("ballot_F_spitzer: m must be >= 0");
  if (!law.gaussian && law.values.size() > 2)
    throw RefusedError("ballot_F_spitzer: needs a Gaussian or a two-atom law");
  std::vector<double> a(static_cast<std::size_t>(m) + 1, 0.0), F(static_cast<std::size_t>(m) + 1, 0.0);
  for (int k = 1; k <= m; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (law.gaussian) {
      // E[e^X; X <= 0], X ~ N(k mu, k var); only mu = 0 has the Mills form
      if (law.mu != 0.0) throw RefusedError("ballot_F_spitzer: Gaussian law must be centered");
      a[ku] = detail::mills_ratio(std::sqrt(k * law.var)) / std::sqrt(2.0 * std::numbers::pi);
      continue;
    }
    const double v1 = law.values[0], p1 = law.probs[0];
    const double v2 = law.values.size() > 1 ? law.values[1] : 0.0, p2 = law.values.size() > 1 ? law.probs[1] : 0.0;
    CompensatedSum acc;
    for (int j = 0; j <= k; ++j) {
      const double s = j * v1 + (k - j) * v2;
      if (s > 1e-12) continue;
      if ((j > 0 && p1 <= 0) || (j < k && p2 <= 0)) continue;
      const double lc = std::lgamma(k + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0);
      acc.add(std::exp(lc + (j ? j * std::log(p1) : 0.0) + (k - j ? (k - j) * std::log(p2) : 0.0) + s));
    }
    a[ku] = acc.value();
  }
  F[0] = 1.0;
  for (int n = 1; n <= m; ++n) {
    CompensatedSum acc;
    for (int k = 1; k <= n; ++k) acc.add(a[static_cast<std::size_t>(k)] * F[static_cast<std::size_t>(n - k)]);
    F[static_cast<std::size_t>(n)] = acc.value() / n;
  }
  return F;
}

/// Twisted sequential Monte Carlo for F_m. Particles follow the centered
/// spine walk and carry the potentials g_{k+1}(S_{k+1}) / g_k(S_k) 1{S_{k+1} <= 0}
/// with g_k(s) = (sigma + |s|) e^{-s^2 / (2 sigma^2 (m-k+1))} (m-k+1)^{-3/2}
/// and g_m(s) = e^s, which telescope to e^{S_m}. The product of mean
/// potentials is unbiased for F_m. Plain e^{S_k - S_{k-1}} potentials let the
/// particle cloud settle near the barrier and lose a constant rate per step;
/// the twist keeps it spreading like the conditioned walk. Independent
/// replicates give the standard error.
inline BallotResult ballot_F(const EnvironmentSpec& spec, int m, std::uint64_t particles, std::uint64_t replicates,
                             std::uint64_t seed, unsigned threads = 1) {
  if (m < 1) throw DomainError("ballot_F: m must be >= 1");
  if (particles < 2 || replicates < 2) throw DomainError("ballot_F: need >= 2 particles and >= 2 replicates");
  const auto law = spine_increment_law(spec);
  const double var = law.variance(), sd = std::sqrt(var);
  auto log_twist = [&](int k, double s) {
    if (k == m) return s;
    const double j = m - k + 1.0;
    return std::log(sd + std::abs(s)) - s * s / (2.0 * var * j) - 1.5 * std::log(j);
  };
  std::vector<double> est(replicates);
  parallel_for(replicates, threads, [&](std::size_t rep) {
    Xoshiro256 eng(derive_seed(seed, "ballot", static_cast<std::uint64_t>(m), rep));
    std::vector<double> s(particles, 0.0), w(particles), next(particles);
    double logZ = log_twist(0, 0.0);
    for (int k = 0; k < m; ++k) {
      double sum = 0.0;
      for (std::size_t i = 0; i < particles; ++i) {
        const double before = log_twist(k, s[i]);
        s[i] += law.sample(eng);
        w[i] = s[i] <= 1e-12 ? std::exp(log_twist(k + 1, s[i]) - before) : 0.0;
        sum += w[i];
      }
      if (sum <= 0.0) {
        logZ = -INFINITY;
        break;
      }
      logZ += std::log(sum / static_cast<double>(particles));
      // systematic resampling
      const double step = sum / static_cast<double>(particles);
      double u = uniform01(eng) * step, acc = 0.0;
      std::size_t j = 0;
      for (std::size_t i = 0; i < particles; ++i) {
        acc += w[i];
        while (j < particles && u < acc) {
          next[j++] = s[i];
          u += step;
        }
      }
      while (j < particles) next[j++] = s[particles - 1];
      s.swap(next);
    }
    est[rep] = std::exp(logZ);
  });
  const auto e = replicate_estimate(est);
  BallotResult r;
  r.F = e.value;
  r.stderr_F = e.std_error;
  r.normalized = r.F * std::pow(m + 1.0, 1.5);
  r.low_precision = e.relative_error() > 0.10;
  r.particles = particles;
  r.replicates = replicates;
  return r;
}

// ===========================================================================
// Passage, excursion, local window, barrier
// ===========================================================================

struct PassageResult {
  double hit_ratio = 0.0, hit_ratio_stderr = 0.0;        // P_x(tau+_y < tau-_0) (y+1)/(x+1)
  double time_ratio = 0.0, time_ratio_stderr = 0.0;      // E_0[tau+_y ^ tau-_0] / y
  double survive_ratio = 0.0, survive_ratio_stderr = 0.0;// P_x(tau-_0 > m) sqrt(m) / (x+1)
  std::uint64_t samples = 0;
};

/// The three normalized statistics. The mean exit time is taken from 0, as
/// in the estimate E[tau+_y ^ tau-_0] ~ y (from x > 0 it grows like x y).
inline PassageResult passage_check(const EnvironmentSpec& spec, double x, double y, std::uint64_t m,
                                   std::uint64_t samples, std::uint64_t seed, unsigned threads = 1) {
  if (!(0.0 <= x && x <= y)) throw DomainError("passage_check: need 0 <= x <= y");
  const auto law = spine_increment_law(spec);
  const std::size_t chunks = 32;
  std::vector<RunningStats> H(chunks), T(chunks), P(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 eng(derive_seed(seed, "passage", c));
    const std::uint64_t lo = samples * c / chunks, hi = samples * (c + 1) / chunks;
    for (std::uint64_t s = lo; s < hi; ++s) {
      double S = x;
      while (true) {
        S += law.sample(eng);
        if (S >= y) {
          H[c].add(1.0);
          break;
        }
        if (S <= 0.0) {
          H[c].add(0.0);
          break;
        }
      }
      S = 0.0;
      std::uint64_t k = 0;
      while (true) {
        S += law.sample(eng);
        ++k;
        if (S >= y || S <= 0.0) break;
      }
      T[c].add(static_cast<double>(k));
      S = x;
      bool alive = true;
      for (std::uint64_t i = 0; i < m && alive; ++i) {
        S += law.sample(eng);
        alive = S > 0.0;
      }
      P[c].add(alive ? 1.0 : 0.0);
    }
  });
  RunningStats h, t, p;
  for (std::size_t c = 0; c < chunks; ++c) {
    h.merge(H[c]);
    t.merge(T[c]);
    p.merge(P[c]);
  }
  PassageResult r;
  r.samples = samples;
  const double hs = (y + 1) / (x + 1), ps = std::sqrt(static_cast<double>(m)) / (x + 1);
  r.hit_ratio = h.mean() * hs;
  r.hit_ratio_stderr = h.stderr_mean() * hs;
  r.time_ratio = t.mean() / y;
  r.time_ratio_stderr = t.stderr_mean() / y;
  r.survive_ratio = p.mean() * ps;
  r.survive_ratio_stderr = p.stderr_mean() * ps;
  return r;
}

/// M P(Y-(tau+_a) > M, tau+_a < tau-_0), Y-(k) = sum_{i=1}^k e^{-S_i}, from S_0 = 0.
inline Estimate excursion_sum_check(const EnvironmentSpec& spec, double a, double M, std::uint64_t samples,
                                    std::uint64_t seed, unsigned threads = 1) {
  if (a < 0 || !(M > 0)) throw DomainError("excursion_sum_check: need a >= 0 and M > 0");
  const auto law = spine_increment_law(spec);
  const std::size_t chunks = 32;
  std::vector<RunningStats> E(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 eng(derive_seed(seed, "excursion", c));
    const std::uint64_t lo = samples * c / chunks, hi = samples * (c + 1) / chunks;
    for (std::uint64_t s = lo; s < hi; ++s) {
      double S = 0.0, Y = 0.0;
      bool event = false;
      while (true) {
        S += law.sample(eng);
        Y += std::exp(-S);
        if (S >= a) {
          event = Y > M;  // tau+_a reached first (S > 0 here unless a = 0)
          if (a == 0.0 && S <= 0.0) event = false;  // S = 0 is also tau-_0
          break;
        }
        if (S <= 0.0) break;
      }
      E[c].add(event ? M : 0.0);
    }
  });
  RunningStats e;
  for (auto& x : E) e.merge(x);
  return to_estimate(e);
}

enum class WindowRegime { Gaussian, Moderate };

struct WindowResult {
  std::vector<double> r;
  std::vector<double> empirical, stderr_emp;
  std::vector<double> prediction;  // paper's form, without constants
  std::vector<WindowRegime> regime;
  /// Same window with the meander constant 1 / (sigma^2 sqrt(pi)) restored;
  /// a diagnostic, not part of the paper's statement.
  std::vector<double> diagnostic;
  std::uint64_t samples = 0;
  double A = 1.0;
  double epsilon = 0.05;
};

/// P(S_m in (r, r+1], S_i > 0 for 1 <= i <= m) for several r at once. Paths
/// are killed at the first nonpositive value. Refuses lattice laws.
inline WindowResult local_window_check(const EnvironmentSpec& spec, std::uint64_t m, const std::vector<double>& rs,
                                       std::uint64_t samples, std::uint64_t seed, unsigned threads = 1,
                                       double A = 1.0, double epsilon = 0.05) {
  if (spec.lattice)
    throw RefusedError("local_window_check: the local estimates assume a non-lattice law of log A; '" + spec.name +
                       "' is lattice");
  const auto an = analyze(spec);
  const auto law = spine_increment_law(spec);
  const double sm = std::sqrt(static_cast<double>(m));
  for (double r : rs)
    if (r < 0.0) throw DomainError("local_window_check: r must be >= 0");
  const std::size_t chunks = 32;
  std::vector<std::vector<RunningStats>> acc(chunks, std::vector<RunningStats>(rs.size()));
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 eng(derive_seed(seed, "window", c));
    const std::uint64_t lo = samples * c / chunks, hi = samples * (c + 1) / chunks;
    std::vector<double> hit(rs.size());
    for (std::uint64_t s = lo; s < hi; ++s) {
      double S = 0.0;
      bool alive = true;
      for (std::uint64_t i = 0; i < m && alive; ++i) {
        S += law.sample(eng);
        alive = S > 0.0;
      }
      for (std::size_t j = 0; j < rs.size(); ++j) acc[c][j].add(alive && S > rs[j] && S <= rs[j] + 1.0 ? 1.0 : 0.0);
    }
  });
  WindowResult out;
  out.samples = samples;
  out.A = A;
  out.epsilon = epsilon;
  const double md = static_cast<double>(m);
  for (std::size_t j = 0; j < rs.size(); ++j) {
    RunningStats t;
    for (std::size_t c = 0; c < chunks; ++c) t.merge(acc[c][j]);
    const double r = rs[j];
    out.r.push_back(r);
    out.empirical.push_back(t.mean());
    out.stderr_emp.push_back(t.stderr_mean());
    if (r <= A * sm) {
      out.regime.push_back(WindowRegime::Gaussian);
      out.prediction.push_back(r * std::pow(md, -1.5) * std::exp(-r * r / (2.0 * an.sigma2 * md)));
    } else {
      out.regime.push_back(WindowRegime::Moderate);
      out.prediction.push_back(std::exp(r * cramer_g(an, r / md)) / md);
    }
    // meander limit: P(tau-_0 > m) ~ 1/sqrt(pi m) for symmetric continuous
    // steps and S_m / (sigma sqrt m) given survival is Rayleigh
    double integral = 0.0;
    for (int q = 0; q < 200; ++q) {
      const double yy = r + (q + 0.5) / 200.0;
      integral += yy * std::exp(-yy * yy / (2.0 * an.sigma2 * md)) / 200.0;
    }
    out.diagnostic.push_back(integral * std::pow(md, -1.5) / (an.sigma2 * std::sqrt(std::numbers::pi)));
  }
  return out;
}

struct BarrierResult {
  double estimate = 0.0, stderr_est = 0.0;
  double bound = 0.0;  // (a/b) e^{b g(b/m)}
  double ratio = 0.0;
  double theta = 0.0;
  std::uint64_t samples = 0;
};

/// P_a(S_m > b, S_i > 0 for 1 <= i <= m) by exponential tilting toward
/// level b (theta solves the tilted mean = b/m), against (a/b) e^{b g(b/m)}.
inline BarrierResult barrier_upper_check(const EnvironmentSpec& spec, std::uint64_t m, double a, double b,
                                         std::uint64_t samples, std::uint64_t seed, unsigned threads = 1) {
  const auto an = analyze(spec);
  const double md = static_cast<double>(m);
  if (!(m > 1)) throw DomainError("barrier_upper_check: need m > 1");
  if (b < an.sigma2 * std::sqrt(md) * std::log(md) * (1 - 1e-12))
    throw DomainError("barrier_upper_check: regime violated, need b >= sigma^2 sqrt(m) log m");
  if (!(a >= 0.0 && a < std::sqrt(md))) throw DomainError("barrier_upper_check: regime violated, need 0 <= a < sqrt(m)");
  if (!(b < md)) throw DomainError("barrier_upper_check: regime violated, need b < m");
  const auto law = spine_increment_law(spec);
  // solve d/dtheta log_mgf = b/m by bisection
  auto slope = [&](double th) {
    const double h = 1e-6;
    return (law.log_mgf(th + h) - law.log_mgf(th - h)) / (2 * h) - b / md;
  };
  double hi = 1.0;
  while (slope(hi) < 0 && hi < 1e3) hi *= 2;
  const double theta = law.gaussian ? (b / md - law.mu) / law.var : detail::bisect_root(slope, 0.0, hi, 1e-12);
  const auto q = law.tilted(theta);
  const double lm = law.log_mgf(theta);
  const std::size_t chunks = 32;
  std::vector<RunningStats> E(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Xoshiro256 eng(derive_seed(seed, "barrier", c));
    const std::uint64_t lo = samples * c / chunks, hi2 = samples * (c + 1) / chunks;
    for (std::uint64_t s = lo; s < hi2; ++s) {
      double S = a;
      bool alive = true;
      for (std::uint64_t i = 0; i < m && alive; ++i) {
        S += q.sample(eng);
        alive = S > 0.0;
      }
      E[c].add(alive && S > b ? std::exp(-theta * (S - a) + md * lm) : 0.0);
    }
  });
  RunningStats e;
  for (auto& x : E) e.merge(x);
  BarrierResult r;
  r.estimate = e.mean();
  r.stderr_est = e.stderr_mean();
  r.bound = (a / b) * std::exp(b * cramer_g(an, b / md));
  r.ratio = r.estimate / r.bound;
  r.theta = theta;
  r.samples = samples;
  return r;
}

}  // namespace rwre
