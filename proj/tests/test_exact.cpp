#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "rwre/envspec.hpp"
#include "rwre/exact.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

using namespace rwre;
using Catch::Approx;

namespace {

// Dense first-step system over every arena vertex plus phi-back (last index).
// Returns h(x) = P_x(T_hit < T_avoid) for all x.
Eigen::VectorXd dense_hitting(const TreeArena& t, NodeId hit, NodeId avoid) {
  const auto n = static_cast<Eigen::Index>(t.size());
  const Eigen::Index phi_back = n;
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n + 1, n + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  for (NodeId x = 0; x < t.size(); ++x) {
    if (x == hit) {
      b[x] = 1.0;
      continue;
    }
    if (x == avoid) continue;
    const double denom = t[x].child_weight_sum + 1.0;
    for (NodeId c : t.children(x)) M(x, c) -= t[c].A / denom;
    M(x, x == t.root() ? phi_back : t[x].parent) -= 1.0 / denom;
  }
  M(phi_back, t.root()) -= 1.0;
  return M.partialPivLu().solve(b);
}

}  // namespace

TEST_CASE("path reduction, sparse solver and dense solve agree", "[exact][oracle]") {
  for (const auto& spec : {calibrate_two_point(true), calibrate_lognormal()}) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      TreeArena t(spec, seed);
      t.grow_to_depth(5);
      t.freeze();
      REQUIRE(t.size() < 1500);
      const auto gen = t.generation(5);
      for (NodeId z : {gen.front(), gen[gen.size() / 2], gen.back()}) {
        const auto h = dense_hitting(t, z, t.root());
        double dense = 0.0;
        const double denom = t[t.root()].child_weight_sum + 1.0;
        for (NodeId c : t.children(t.root())) dense += t[c].A / denom * h[c];
        const double closed = root_excursion_hit(t, z);
        CHECK(closed == Approx(dense).epsilon(1e-10));
        CHECK(root_excursion_hit_solver(t, z) == Approx(dense).epsilon(1e-10));
        HittingSolver s(t, z, t.root());
        for (NodeId x = 0; x < t.size(); ++x) CHECK(s.value(x) == Approx(h[x]).margin(1e-10));
      }
    }
  }
}

TEST_CASE("segment closed forms against the dense solve", "[exact][oracle]") {
  TreeArena t(calibrate_lognormal(), 21);
  t.grow_to_depth(6);
  t.freeze();
  for (NodeId x : {t.generation(6).front(), t.generation(6).back()}) {
    const auto path = t.path_to(x);
    for (std::size_t i = 1; i + 2 < path.size(); ++i) {
      const NodeId xp = path[i];
      const auto h = dense_hitting(t, x, xp);
      CHECK(path_hitting(t, xp, x, StartAt::ChildOfAncestor) == Approx(h[path[i + 1]]).epsilon(1e-10));
      // from the parent of x, hitting x' first
      const auto g = dense_hitting(t, xp, x);
      CHECK(path_hitting(t, xp, x, StartAt::ParentOfTarget) == Approx(g[t[x].parent]).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(path_hitting(t, 1, 1, StartAt::ChildOfAncestor), DomainError);
}

TEST_CASE("p_z against walker excursions", "[exact][mc]") {
  TreeArena t(calibrate_lognormal(), 5);
  t.grow_to_depth(4);
  const NodeId z = t.generation(3).front();
  const double p = root_excursion_hit(t, z);
  Walker w(t, 77);
  std::uint64_t hits = 0, last = 0;
  const std::uint64_t n = 200'000;
  bool hit = false;
  while (w.returns() < n) {
    const NodeId x = w.step();
    if (x == z) hit = true;
    if (w.returns() != last) {
      hits += hit;
      hit = false;
      last = w.returns();
    }
  }
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
  CHECK(static_cast<double>(hits) / n == Approx(p).margin(5 * se));
}

TEST_CASE("quenched mean of K_n", "[exact]") {
  TreeArena t(calibrate_two_point(true), 8);
  t.grow_to_depth(4);
  double sum = 0.0;
  for (NodeId z : t.generation(4)) sum += root_excursion_hit(t, z);
  CHECK(quenched_mean_K(t, 0, 4) == 0.0);
  CHECK(quenched_mean_K(t, 1, 4) == Approx(sum).epsilon(1e-12));
  CHECK(quenched_mean_K(t, 1'000'000'000ULL, 4) == Approx(16.0).epsilon(1e-9));
  double prev = 0.0;
  for (std::uint64_t n : {1ULL, 3ULL, 10ULL, 100ULL}) {
    const double v = quenched_mean_K(t, n, 4);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("miss bound constants", "[exact]") {
  const auto sym2 = calibrate_two_point(true);
  const double c7 = analytic_c7(sym2);
  CHECK(c7 == Approx(1.0 / (2.0 / (2.0 - std::sqrt(3.0)) + 1.0)).epsilon(1e-12));
  CHECK(c7 == Approx(0.118).margin(5e-4));
  TreeArena t(sym2, 13);
  t.grow_to_depth(8);
  for (int k = 1; k <= 8; ++k)
    for (NodeId z : t.generation(k)) {
      const double p = root_excursion_hit(t, z);
      const auto& nd = t[z];
      // ellipticity lower bound on p_z
      CHECK(p >= c7 / (nd.depth * std::exp(nd.Vbar)) * (1 - 1e-12));
      const double req = required_c7(t, z);
      CHECK(req >= c7 * (1 - 1e-12));
      // the bound with the required constant reproduces (1 - p)^N exactly
      const double N = 50.0;
      CHECK(miss_bound_value(t, z, N, req) == Approx(std::pow(1 - p, N)).epsilon(1e-9));
    }
  CHECK_THROWS_AS(analytic_c7(calibrate_lognormal()), RefusedError);
  TreeArena g(calibrate_lognormal(), 1);
  g.grow_to_depth(2);
  CHECK_THROWS_AS(miss_probability_bound(g, g.generation(2).front(), 10, 0.1, 10, 1), RefusedError);
}

TEST_CASE("empirical miss rate matches (1 - p_z)^N", "[exact][mc]") {
  TreeArena t(calibrate_two_point(true), 3);
  t.grow_to_depth(5);
  const NodeId z = t.generation(5).back();
  const auto mb = miss_probability_bound(t, z, 20, analytic_c7(t.spec()), 4000, 9);
  CHECK(mb.mc_miss == Approx(mb.exact_miss).margin(5 * std::max(mb.mc_stderr, 1e-3)));
  CHECK(mb.exact_miss <= mb.bound + 1e-12);
}
