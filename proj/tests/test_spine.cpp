#include <catch_amalgamated.hpp>

#include "rwre/envspec.hpp"
#include "rwre/spine.hpp"
#include "rwre/tree.hpp"

using namespace rwre;
using Catch::Approx;

namespace {

// Left side of many-to-one by brute force over every edge labelling of the
// full N-ary tree of depth n (deterministic N, finite weight table).
double tree_enumeration(const EnvironmentSpec& spec, int n, const PathFunctional& F) {
  const int N = spec.offspring.max_count();
  const auto& atoms = spec.weights.atoms;
  int edges = 0;
  for (int k = 1, w = N; k <= n; ++k, w *= N) edges += w;
  std::vector<std::size_t> lab(static_cast<std::size_t>(edges), 0);
  double total = 0.0;
  while (true) {
    double prob = 1.0;
    for (auto l : lab) prob *= atoms[l].prob;
    // heap-style indexing: edge into vertex v (v >= 1) has label lab[v - 1]
    double sum = 0.0;
    const int first_leaf = edges - static_cast<int>(std::pow(N, n)) + 1;
    for (int leaf = first_leaf; leaf <= edges; ++leaf) {
      std::vector<int> chain;
      for (int v = leaf; v > 0; v = (v - 1) / N) chain.push_back(v);
      std::reverse(chain.begin(), chain.end());
      std::vector<double> V;
      double v = 0.0;
      for (int u : chain) {
        v -= std::log(atoms[lab[static_cast<std::size_t>(u - 1)]].value);
        V.push_back(v);
      }
      sum += std::exp(-v) * F.f(V);
    }
    total += prob * sum;
    std::size_t i = 0;
    while (i < lab.size() && ++lab[i] == atoms.size()) lab[i++] = 0;
    if (i == lab.size()) break;
  }
  return total;
}

}  // namespace

TEST_CASE("many-to-one: enumeration oracle on full trees", "[spine][oracle]") {
  for (const auto& spec : {calibrate_two_point(true), calibrate_two_point(false)}) {
    REQUIRE(spec.offspring.max_count() == 2);
    REQUIRE(spec.offspring.q(2) == 1.0);
    for (const auto& F : functional_library())
      for (int n = 1; n <= 3; ++n) {
        const double oracle = tree_enumeration(spec, n, F);
        const auto r = mto_exact(spec, n, F);
        CHECK(r.lhs == Approx(oracle).epsilon(1e-12).margin(1e-14));
        CHECK(r.rhs == Approx(oracle).epsilon(1e-12).margin(1e-14));
      }
  }
}

TEST_CASE("many-to-one: Monte Carlo on grown trees", "[spine][mc]") {
  const auto spec = calibrate_lognormal();
  const auto lib = functional_library();
  for (const auto& F : lib) {
    if (!F.bounded) continue;
    const auto r = mto_monte_carlo(spec, 3, F, 40'000, 5);
    const double se = std::hypot(r.lhs_stderr, r.rhs_stderr);
    CHECK(std::abs(r.lhs - r.rhs) <= 5 * se + 1e-12);
  }
  CHECK_THROWS_AS(mto_exact(spec, 2, lib.front()), RefusedError);
}

TEST_CASE("spine increment law is a centered probability law", "[spine][property]") {
  for (const auto& spec : {calibrate_two_point(true), calibrate_two_point(false), calibrate_lognormal()}) {
    const auto law = spine_increment_law(spec);
    if (!law.gaussian) {
      double s = 0;
      for (double p : law.probs) s += p;
      CHECK(s == Approx(1.0).epsilon(1e-12));
    }
    CHECK(law.mean() == Approx(0.0).margin(1e-9));
    for (double th : {-0.5, 0.3, 1.2}) {
      const double h = 1e-5;
      const double slope = (law.log_mgf(th + h) - law.log_mgf(th - h)) / (2 * h);
      CHECK(law.tilted(th).mean() == Approx(slope).epsilon(1e-6));
    }
  }
}

TEST_CASE("ballot: Baxter-Spitzer recursion equals the lattice DP", "[spine][oracle]") {
  for (const auto& spec : {calibrate_two_point(true), calibrate_two_point(false)}) {
    const auto law = spine_increment_law(spec);
    const auto F = ballot_F_spitzer(law, 24);
    CHECK(F[0] == 1.0);
    for (int m = 1; m <= 24; ++m) CHECK(F[static_cast<std::size_t>(m)] == Approx(ballot_F_exact(law, m)).epsilon(1e-11));
  }
  const auto law = spine_increment_law(calibrate_two_point(true));
  CHECK(ballot_F_exact(law, 1) == Approx((2.0 - std::sqrt(3.0)) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(ballot_F_exact(spine_increment_law(calibrate_lognormal()), 3), RefusedError);
}

TEST_CASE("ballot: Gaussian recursion for small m", "[spine][oracle]") {
  const auto law = spine_increment_law(calibrate_lognormal());
  const auto F = ballot_F_spitzer(law, 2);
  const double s2 = law.variance(), s = std::sqrt(s2);
  // F_1 = E[e^X; X <= 0] = e^{s2/2} Phi(-s)
  const double F1 = std::exp(0.5 * s2) * 0.5 * std::erfc(s / std::sqrt(2.0));
  CHECK(F[1] == Approx(F1).epsilon(1e-12));
  // F_2 by quadrature: E[e^{X1+X2}; X1 <= 0, X1 + X2 <= 0]
  double F2 = 0;
  const int K = 20000;
  const double lo = -12 * s;
  for (int i = 0; i < K; ++i) {
    const double x = lo + (i + 0.5) * (-lo) / K;
    const double dens = std::exp(-x * x / (2 * s2)) / std::sqrt(2 * std::numbers::pi * s2);
    F2 += dens * std::exp(x) * std::exp(0.5 * s2) * 0.5 * std::erfc((x + s2) / (s * std::sqrt(2.0))) * (-lo) / K;
  }
  CHECK(F[2] == Approx(F2).epsilon(1e-6));
}

TEST_CASE("ballot: twisted particle estimate against the exact value", "[spine][mc]") {
  for (const auto& spec : {calibrate_lognormal(), calibrate_two_point(true)}) {
    const auto law = spine_increment_law(spec);
    for (int m : {8, 64}) {
      const double exact = ballot_F_spitzer(law, m).back();
      const auto r = ballot_F(spec, m, 2000, 16, 3);
      CHECK(std::abs(r.F - exact) <= 4 * r.stderr_F + 0.02 * exact);
      CHECK(r.normalized == Approx(r.F * std::pow(m + 1.0, 1.5)));
    }
  }
  CHECK_THROWS_AS(ballot_F(calibrate_lognormal(), 0, 10, 2, 1), DomainError);
  CHECK_THROWS_AS(ballot_F(calibrate_lognormal(), 4, 1, 2, 1), DomainError);
}

TEST_CASE("excursion sum: one-step closed form for sym2 at a = 0", "[spine]") {
  // S_1 = +-log(2+sqrt 3) with probability 1/2; Y-(1) = 2 - sqrt 3 after an up-step
  const auto spec = calibrate_two_point(true);
  const std::uint64_t n = 200'000;
  for (double M : {0.05, 0.2}) {
    const auto e = excursion_sum_check(spec, 0.0, M, n, 4);
    CHECK(e.value == Approx(0.5 * M).margin(5 * 0.5 * M / std::sqrt(static_cast<double>(n))));
  }
  CHECK(excursion_sum_check(spec, 0.0, 0.3, 10'000, 4).value == 0.0);
  CHECK_THROWS_AS(excursion_sum_check(spec, -1.0, 1.0, 10, 1), DomainError);
}

TEST_CASE("passage statistics are reproducible and sane", "[spine]") {
  const auto spec = calibrate_lognormal();
  const auto a = passage_check(spec, 0.0, 5.0, 100, 4000, 8);
  const auto b = passage_check(spec, 0.0, 5.0, 100, 4000, 8);
  CHECK(a.hit_ratio == b.hit_ratio);
  CHECK(a.time_ratio == b.time_ratio);
  CHECK(a.time_ratio >= 1.0 / 5.0);  // at least one step
  CHECK(a.hit_ratio > 0.0);
  CHECK_THROWS_AS(passage_check(spec, 3.0, 2.0, 10, 10, 1), DomainError);
}

TEST_CASE("local window and barrier refusals", "[spine]") {
  CHECK_THROWS_AS(local_window_check(calibrate_two_point(true), 100, {1.0}, 10, 1), RefusedError);
  const auto g = calibrate_lognormal();
  CHECK_THROWS_AS(local_window_check(g, 100, {-1.0}, 10, 1), DomainError);
  const auto w = local_window_check(g, 100, {1.0, 50.0}, 1000, 1);
  CHECK(w.regime[0] == WindowRegime::Gaussian);
  CHECK(w.regime[1] == WindowRegime::Moderate);
  CHECK_THROWS_AS(barrier_upper_check(g, 100, 1.0, 2.0, 10, 1), DomainError);
  CHECK_THROWS_AS(barrier_upper_check(g, 100, 20.0, 80.0, 10, 1), DomainError);
}

TEST_CASE("barrier importance sampling against plain Monte Carlo", "[spine][mc]") {
  const auto g = calibrate_lognormal();
  const auto an = analyze(g);
  const std::uint64_t m = 16;
  const double a = 1.0, b = an.sigma2 * 4.0 * std::log(16.0) * 1.01;
  const auto r = barrier_upper_check(g, m, a, b, 200'000, 2);
  CHECK(r.theta == Approx(b / m / an.sigma2).epsilon(1e-12));
  const auto law = spine_increment_law(g);
  Xoshiro256 eng(99);
  RunningStats plain;
  for (int s = 0; s < 2'000'000; ++s) {
    double S = a;
    bool alive = true;
    for (std::uint64_t i = 0; i < m && alive; ++i) {
      S += law.sample(eng);
      alive = S > 0.0;
    }
    plain.add(alive && S > b ? 1.0 : 0.0);
  }
  REQUIRE(plain.mean() > 0.0);
  CHECK(std::abs(r.estimate - plain.mean()) <= 5 * std::hypot(r.stderr_est, plain.stderr_mean()));
  CHECK(r.ratio == Approx(r.estimate / r.bound));
}
