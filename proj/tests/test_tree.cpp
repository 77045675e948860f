#include <catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "rwre/envspec.hpp"
#include "rwre/tree.hpp"

using namespace rwre;
using Catch::Approx;

namespace {

// Node content keyed by its Ulam-Harris label, independent of arena ids.
using Label = std::vector<int>;
struct Content {
  double A;
  std::uint32_t children;
};

void collect(const TreeArena& t, NodeId id, Label& label, std::map<Label, Content>& out, int depth) {
  out[label] = {t[id].A, t[id].child_count};
  if (static_cast<int>(t[id].depth) >= depth) return;
  int i = 0;
  for (NodeId c : t.children(id)) {
    label.push_back(i++);
    collect(t, c, label, out, depth);
    label.pop_back();
  }
}

std::map<Label, Content> contents(const TreeArena& t, int depth) {
  std::map<Label, Content> out;
  Label l;
  collect(t, t.root(), l, out, depth);
  return out;
}

}  // namespace

TEST_CASE("tree content does not depend on extension order", "[tree][property]") {
  const auto spec = calibrate_lognormal(OffspringLaw::from_pairs({{1, 0.3}, {2, 0.4}, {3, 0.3}}));
  for (std::uint64_t seed : {1ULL, 99ULL, 12345ULL}) {
    TreeArena bfs(spec, seed), dfs(spec, seed);
    bfs.grow_to_depth(6);
    // depth-first, rightmost child first
    std::vector<NodeId> stack{dfs.root()};
    while (!stack.empty()) {
      const NodeId x = stack.back();
      stack.pop_back();
      if (dfs[x].depth >= 6) continue;
      auto ch = dfs.extend(x);
      for (NodeId c : ch) stack.push_back(c);
    }
    const auto a = contents(bfs, 6), b = contents(dfs, 6);
    REQUIRE(a.size() == b.size());
    for (const auto& [label, c] : a) {
      const auto it = b.find(label);
      REQUIRE(it != b.end());
      CHECK(it->second.A == c.A);
      CHECK(it->second.children == c.children);
    }
  }
}

TEST_CASE("extend is idempotent", "[tree]") {
  TreeArena t(calibrate_two_point(true), 7);
  const auto first = t.extend(t.root());
  const std::vector<NodeId> a(first.begin(), first.end());
  const auto size = t.size();
  const auto again = t.extend(t.root());
  CHECK(std::vector<NodeId>(again.begin(), again.end()) == a);
  CHECK(t.size() == size);
}

TEST_CASE("potentials along ancestral paths", "[tree][property]") {
  TreeArena t(calibrate_lognormal(), 3);
  t.grow_to_depth(7);
  for (NodeId x = 1; x < t.size(); ++x) {
    const auto path = t.path_to(x);
    REQUIRE(path.front() == t.root());
    REQUIRE(path.back() == x);
    CHECK(path.size() == t[x].depth + 1);
    double V = 0.0, Vbar = -INFINITY;
    for (std::size_t i = 1; i < path.size(); ++i) {
      V -= std::log(t[path[i]].A);
      Vbar = std::max(Vbar, V);
    }
    CHECK(t[x].V == Approx(V).margin(1e-12));
    CHECK(t[x].Vbar == Approx(Vbar).margin(1e-12));
    CHECK(t.is_ancestor(t.root(), x));
    CHECK_FALSE(t.is_ancestor(x, t.root()));
  }
  // child weight sums
  for (NodeId x = 0; x < t.size(); ++x) {
    double s = 0;
    for (NodeId c : t.children(x)) s += t[c].A;
    CHECK(t[x].child_weight_sum == Approx(s).margin(1e-14));
  }
}

TEST_CASE("generation sizes and statistics", "[tree]") {
  const auto spec = calibrate_two_point(true);
  TreeArena t(spec, 5);
  const auto z = t.grow_to_depth(8);
  for (int k = 1; k <= 8; ++k) {
    CHECK(z[static_cast<std::size_t>(k - 1)] == (1ULL << k));
    const auto g = generation_stats(t, k);
    CHECK(g.Z == (1ULL << k));
    CHECK(g.W == Approx(1.0).margin(1e-12));  // Z_k e^{-k log 2}
    double mn = INFINITY;
    for (NodeId x : t.generation(k)) mn = std::min(mn, t[x].Vbar);
    CHECK(g.min_Vbar == mn);
    CHECK(t[g.argmin].Vbar == mn);
  }
  CHECK_THROWS_AS(t.generation(9), NotGrownError);
  CHECK(t.generation_grow(9).size() == 512);
}

TEST_CASE("survival conditioning regrows extinct trees", "[tree]") {
  const auto spec = calibrate_lognormal(OffspringLaw::from_pairs({{0, 0.45}, {3, 0.55}}));
  std::uint64_t resampled = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    TreeArena t(spec, seed);
    const auto z = t.grow_to_depth(6, true);
    CHECK(z.back() > 0);
    resampled += t.survival_resamples();
  }
  CHECK(resampled > 0);  // extinction probability is about 0.6 here
}

TEST_CASE("node cap raises a capacity error", "[tree]") {
  TreeArena t(calibrate_two_point(true), 1, 100);
  CHECK_THROWS_AS(t.grow_to_depth(10), CapacityError);
}

TEST_CASE("dump and load round trip", "[tree]") {
  const auto spec = calibrate_lognormal();
  TreeArena t(spec, 17);
  t.grow_to_depth(6);
  std::stringstream ss;
  dump_tree(t, ss);
  const auto u = load_tree(spec, ss);
  REQUIRE(u.size() == t.size());
  for (NodeId x = 0; x < t.size(); ++x) {
    CHECK(u[x].A == t[x].A);
    CHECK(u[x].V == t[x].V);
    CHECK(u[x].Vbar == t[x].Vbar);
    CHECK(u[x].depth == t[x].depth);
    CHECK(u[x].parent == t[x].parent);
    const auto a = t.children(x), b = u.children(x);
    CHECK(std::vector<NodeId>(a.begin(), a.end()) == std::vector<NodeId>(b.begin(), b.end()));
  }
  // loaded trees are frozen
  CHECK(u.expanded(u.generation(6).front()));
  std::stringstream bad("0 -1 0 1 0 -inf\n1 5 1 1 0 0\n");
  CHECK_THROWS_AS(load_tree(spec, bad), ParseError);
}

TEST_CASE("accessible counts against brute force", "[tree][oracle]") {
  const auto spec = calibrate_lognormal();
  for (std::uint64_t seed : {2ULL, 4ULL, 8ULL}) {
    TreeArena t(spec, seed);
    t.grow_to_depth(9);
    for (double a : {-1.0, 0.0, 1.0, 2.5, 5.0})
      for (int k : {3, 6, 9}) {
        std::uint64_t brute = 0;
        for (NodeId x : t.generation(k)) brute += t[x].Vbar <= a;
        CHECK(accessible_count(t, a, k) == brute);
      }
    // relative barrier below a generation-2 vertex
    const NodeId o = t.generation(2).back();
    for (double a : {0.0, 1.5}) {
      std::uint64_t brute = 0;
      for (NodeId x : t.generation(7)) {
        if (!t.is_ancestor(o, x)) continue;
        double m = -INFINITY;
        for (NodeId y = x; y != o; y = t[y].parent) m = std::max(m, t[y].V - t[o].V);
        brute += m <= a;
      }
      CHECK(accessible_count(t, a, 7, o, Barrier::Relative) == brute);
    }
  }
  TreeArena lazy(spec, 2), full(spec, 2);
  full.grow_to_depth(12);
  CHECK(accessible_count_grow(lazy, 1.0, 12) == accessible_count(full, 1.0, 12));
  CHECK(lazy.size() < full.size());
}

TEST_CASE("freeze turns unexpanded vertices into leaves", "[tree]") {
  TreeArena t(calibrate_two_point(true), 3);
  t.grow_to_depth(3);
  const auto n = t.size();
  t.freeze();
  const NodeId leaf = t.generation(3).front();
  CHECK(t.extend(leaf).empty());
  CHECK(t.size() == n);
}
