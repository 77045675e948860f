#include <catch_amalgamated.hpp>

#include "rwre/envspec.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

using namespace rwre;
using Catch::Approx;

TEST_CASE("local times add up to the number of steps", "[walker][property]") {
  for (const auto& spec : {calibrate_two_point(true), calibrate_lognormal()}) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      TreeArena t(spec, seed);
      Walker w(t, seed + 100);
      for (std::uint64_t n : {1ULL, 10ULL, 1000ULL, 50'000ULL}) {
        w.run_steps(n - w.steps());
        CHECK(w.local_time_total() == w.steps());
        CHECK(w.local_time(t.root()) == w.returns());
      }
    }
  }
}

TEST_CASE("K_n with n = 0 is zero", "[walker]") {
  TreeArena t(calibrate_lognormal(), 1);
  Walker w(t, 2);
  w.snapshot_at_returns({5});
  w.run_until_returns(5, 1'000'000);
  for (int m = 0; m < 5; ++m) CHECK(w.K(m, 0) == 0);
  CHECK(w.K(0, 5) == 1);
  CHECK_THROWS_AS(w.K(1, 3), DomainError);
  CHECK_THROWS_AS(w.K(1, 99), DomainError);
}

TEST_CASE("K_n is non-decreasing in n and bounded by Z_m", "[walker][property]") {
  const auto spec = calibrate_two_point(true);
  TreeArena t(spec, 11);
  Walker w(t, 12);
  std::vector<std::uint64_t> ns{1, 2, 5, 10, 50, 200};
  w.snapshot_at_returns(ns);
  REQUIRE(w.run_until_returns(200, 100'000'000).completed);
  for (int m = 1; m <= 6; ++m) {
    std::uint64_t prev = 0;
    for (auto n : ns) {
      CHECK(w.K(m, n) >= prev);
      CHECK(w.K(m, n) <= (1ULL << m));
      prev = w.K(m, n);
    }
    CHECK(w.visited_count(m) >= prev);
  }
}

TEST_CASE("transition probabilities on a flat binary tree", "[walker]") {
  // all conductances 1: from any vertex, each neighbour with probability 1/3
  const auto spec = flat_environment(OffspringLaw::deterministic(2));
  TreeArena t(spec, 1);
  Walker w(t, 5);
  std::uint64_t from_root = 0, to_phi = 0, to_left = 0;
  NodeId prev = w.position();
  for (int i = 0; i < 300'000; ++i) {
    const NodeId x = w.step();
    if (prev == t.root()) {
      ++from_root;
      to_phi += x == kPhiBack;
      to_left += x == t.children(t.root())[0];
    }
    prev = x;
  }
  const double n = static_cast<double>(from_root);
  CHECK(to_phi / n == Approx(1.0 / 3).margin(5 * std::sqrt(2.0 / 9 / n)));
  CHECK(to_left / n == Approx(1.0 / 3).margin(5 * std::sqrt(2.0 / 9 / n)));
}

TEST_CASE("walks are reproducible from their seeds", "[walker]") {
  const auto spec = calibrate_lognormal();
  TreeArena a(spec, 4), b(spec, 4);
  Walker wa(a, 9), wb(b, 9);
  for (int i = 0; i < 20'000; ++i) REQUIRE(wa.step() == wb.step());
  CHECK(wa.max_depth() == wb.max_depth());
  CHECK(largest_full_generation(a, wa) == largest_full_generation(b, wb));
}

TEST_CASE("R_n and X_n* on a small finite tree", "[walker]") {
  TreeArena t(calibrate_two_point(true), 2);
  t.grow_to_depth(4);
  t.freeze();
  Walker w(t, 3);
  w.run_steps(2'000'000);
  const auto o = observables(t, w, {1, 2, 3, 4});
  // the finite tree has been covered; generations past 4 are empty
  CHECK(o.Xstar == 4);
  for (int m = 1; m <= 4; ++m) CHECK(o.M.at(m) == (1ULL << m));
  CHECK(o.R == 200);
  TreeArena u(calibrate_lognormal(), 2);
  Walker v(u, 3);
  v.run_steps(10'000);
  const int R = largest_full_generation(u, v);
  CHECK(R <= v.max_depth());
  for (int m = 1; m <= R; ++m) CHECK(v.visited_count(m) == u.generation(m).size());
}

TEST_CASE("run_until_returns respects the step cap", "[walker]") {
  TreeArena t(calibrate_lognormal(), 8);
  Walker w(t, 8);
  const auto r = w.run_until_returns(1'000'000, 500);
  CHECK_FALSE(r.completed);
  CHECK(r.steps == 500);
  CHECK_THROWS_AS(w.run_until_returns(0, 10), DomainError);
}
