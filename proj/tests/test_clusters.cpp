#include <catch_amalgamated.hpp>

#include "rwre/clusters.hpp"
#include "rwre/envspec.hpp"
#include "rwre/random.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

using namespace rwre;

namespace {

// Largest ordered sub-family with spacing >= m, by trying every subset.
std::size_t exhaustive_family(const std::vector<ClusterExtent>& c, std::uint64_t m) {
  std::size_t best = 0;
  const std::size_t n = c.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<ClusterExtent> f;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) f.push_back(c[i]);
    if (spacing_statistic(f) >= m) best = std::max(best, f.size());
  }
  return best;
}

}  // namespace

TEST_CASE("clusters and Neveu distance on the binary tree", "[clusters]") {
  TreeArena t(flat_environment(OffspringLaw::deterministic(2)), 1);
  t.grow_to_depth(4);
  const auto c = cluster_of(t, t.root(), 3);
  CHECK(c.size() == 8);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(neveu_rank(t, c[i]) == i);
  CHECK(neveu_distance(t, 3, {c.front()}, {c.back()}) == 6);
  CHECK(neveu_distance(t, 3, {c[0], c[1]}, {c[2]}) == 0);
  CHECK_THROWS_AS(neveu_distance(t, 3, {c[3]}, {c[2]}), DomainError);
  CHECK_THROWS_AS(neveu_distance(t, 3, {t.root()}, {c[2]}), DomainError);
  // C_{|z|}(z) = {z}
  const NodeId z = t.generation(2)[1];
  CHECK(cluster_of(t, z, 2) == std::vector<NodeId>{z});
  CHECK(cluster_of(t, z, 4).size() == 4);
  CHECK(descendants_at(t, z, 40) == (1ULL << 38));
  CHECK_THROWS_AS(descendants_at(t, t.root(), 80), CapacityError);
  CHECK_THROWS_AS(cluster_of(t, z, 1), DomainError);
}

TEST_CASE("Neveu rank on random trees matches generation order", "[clusters][property]") {
  const auto spec = calibrate_lognormal(OffspringLaw::from_pairs({{0, 0.2}, {1, 0.2}, {2, 0.3}, {4, 0.3}}));
  for (std::uint64_t seed : {3ULL, 4ULL, 5ULL}) {
    TreeArena t(spec, seed);
    t.grow_to_depth(6, true);
    const auto gen = t.generation(6);
    for (std::size_t i = 0; i < gen.size(); ++i) CHECK(neveu_rank(t, gen[i]) == i);
  }
}

TEST_CASE("spacing statistic", "[clusters]") {
  std::vector<ClusterExtent> f{{0, 0, 1, 2}, {1, 5, 6, 2}};
  CHECK(spacing_statistic(f) == kInfiniteSpacing);
  f.push_back({2, 10, 12, 3});
  CHECK(spacing_statistic(f) == 8);  // ranks 2..9 lie between cluster 0 and cluster 2
  f.push_back({3, 13, 13, 1});
  CHECK(spacing_statistic(f) == 6);
}

TEST_CASE("greedy family is optimal", "[clusters][oracle]") {
  SplitMix64 eng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + eng() % 12;
    std::vector<ClusterExtent> c;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pos += eng() % 5;
      const std::uint64_t w = eng() % 4;
      c.push_back({static_cast<NodeId>(i), pos, pos + w, w + 1});
      pos += w + 1;
    }
    for (std::uint64_t m : {0ULL, 1ULL, 3ULL, 8ULL, 20ULL}) {
      const auto g = greedy_family(c, m);
      CHECK(spacing_statistic(g) >= m);
      CHECK(g.size() == exhaustive_family(c, m));
    }
  }
}

TEST_CASE("regular cut plans", "[clusters]") {
  const auto spec = calibrate_lognormal();
  const auto a = build_cut_plan(spec, 10.0, 0.5, 0.1, 0.2);
  CHECK(a.ss == Catch::Approx(0.55));
  CHECK(a.ks == Catch::Approx(0.1));
  CHECK(a.rs == Catch::Approx(0.35));
  CHECK(a.degenerate);
  CHECK_FALSE(a.feasible);
  TreeArena t(spec, 1);
  Walker w(t, 1);
  CHECK_THROWS_AS(scan_A_events(t, w, a, 1, {1.0}), DomainError);

  const auto b = build_cut_plan(spec, 10.0, 1.5, 0.1, 0.1);
  CHECK(b.ss == Catch::Approx(2.5 / 3));
  CHECK(b.ks == Catch::Approx(0.1));
  CHECK(b.rs == Catch::Approx(0.7));

  CHECK_THROWS_AS(build_cut_plan(spec, 10.0, 0.5, 0.1, 0.3), DomainError);
  CHECK_THROWS_AS(build_cut_plan(spec, 10.0, 1.5, 0.1, 0.2), DomainError);
  CHECK_THROWS_AS(build_cut_plan(spec, 10.0, 2.5, 0.1, 0.1), DomainError);

  for (double log_n : {1100.0, 2000.0, 5000.0}) {
    const auto p = build_cut_plan(spec, log_n, 1.5, 0.1, 0.1);
    REQUIRE(p.feasible);
    CHECK(p.k >= 2);
    CHECK(p.k * p.r + (p.k - 1) * p.h == p.ell);
    CHECK(p.end_generation(static_cast<int>(p.k)) == p.ell);
    CHECK(p.ell <= p.ell_target);
    CHECK(p.trimmed == p.ell_target - p.ell);
    CHECK(p.trimmed < p.k - 1);
    for (int i = 1; i < p.k; ++i) CHECK(p.root_generation(i + 1) == p.end_generation(i) + p.h);
  }
}

TEST_CASE("A-events are monotone in m and q", "[clusters][property]") {
  TreeArena t(flat_environment(OffspringLaw::deterministic(2)), 2);
  Walker w(t, 3);
  w.run_steps(20'000);
  CutPlan p;
  p.feasible = true;
  p.k = 2;
  p.r = 2;
  p.h = 1;
  std::uint64_t prev = std::numeric_limits<std::uint64_t>::max();
  for (std::uint64_t m : {0ULL, 1ULL, 2ULL, 5ULL, 10ULL}) {
    const auto s = scan_A_events(t, w, p, m, {1.0, 2.0});
    REQUIRE(s.size() == 2);
    CHECK(s[1].root_generation == 3);
    CHECK(s[1].end_generation == 5);
    CHECK(s[1].q_found <= prev);
    prev = s[1].q_found;
    CHECK(s[1].q_found <= s[1].candidates);
    const auto lo = scan_A_events(t, w, p, m, {0.0});
    const auto hi = scan_A_events(t, w, p, m, {1e9});
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(lo[i].event);
      CHECK_FALSE(hi[i].event);
    }
  }
}

TEST_CASE("full-cluster and spread witnesses", "[clusters]") {
  // a finite binary tree of depth 5, covered by a long walk
  TreeArena t(flat_environment(OffspringLaw::deterministic(2)), 2);
  t.grow_to_depth(5);
  t.freeze();
  Walker w(t, 4);
  w.run_steps(200'000);
  REQUIRE(w.max_depth() == 5);
  const auto full = witness_full_cluster(t, w, 5, 0);
  CHECK(full.full);
  CHECK(full.cluster_size == 32);
  const auto same = witness_full_cluster(t, w, 3, 3);
  CHECK(same.full);
  CHECK(same.cluster_size == 1);
  const auto spread = witness_spread(t, w, w.max_depth(), 0);
  CHECK(spread.all);
  const auto beyond = witness_spread(t, w, w.max_depth() + 1, 1);
  CHECK_FALSE(beyond.all);
  CHECK(beyond.worst != kNoNode);
  CHECK_THROWS_AS(witness_full_cluster(t, w, 2, 3), DomainError);
  CHECK_THROWS_AS(witness_spread(t, w, 2, -1), DomainError);
}
