#pragma once

// Clusters C_m(z) = {u > z, |u| = m}, left-to-right (Neveu) order within a
// generation, the regular-cut plan and the visited-cluster searches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rwre/envspec.hpp"
#include "rwre/error.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

namespace rwre {

inline constexpr std::uint64_t kInfiniteSpacing = std::numeric_limits<std::uint64_t>::max();

/// Generation-m descendants of z in Neveu order. By convention C_{|z|}(z) = {z}.
/// Grows the subtree when `grow` is set, otherwise throws NotGrownError.
inline std::vector<NodeId> cluster_of(TreeArena& t, NodeId z, int m, bool grow = true) {
  const int dz = static_cast<int>(t[z].depth);
  if (m < dz) throw DomainError("cluster_of: m must be >= depth(z)");
  std::vector<NodeId> level{z};
  for (int g = dz; g < m; ++g) {
    std::vector<NodeId> next;
    for (NodeId id : level) {
      if (!grow && !t.expanded(id)) throw NotGrownError("cluster_of: subtree not grown to generation " + std::to_string(m));
      auto ch = grow ? t.extend(id) : t.children(id);
      next.insert(next.end(), ch.begin(), ch.end());
    }
    level = std::move(next);
  }
  return level;
}

/// Number of generation-m descendants of u (u itself if m = |u|). A
/// deterministic offspring law is handled in closed form.
inline std::uint64_t descendants_at(TreeArena& t, NodeId u, int m) {
  const int du = static_cast<int>(t[u].depth);
  if (m < du) return 0;
  const auto& q = t.spec().offspring;
  const int top = q.max_count();
  if (q.q(top) == 1.0) {
    std::uint64_t c = 1;
    for (int g = du; g < m; ++g) {
      if (top != 0 && c > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(top))
        throw CapacityError("descendants_at: generation size overflows 64 bits");
      c *= static_cast<std::uint64_t>(top);
    }
    return c;
  }
  return cluster_of(t, u, m).size();
}

/// 0-based left-to-right rank of x within its generation: the number of
/// generation-|x| individuals to its left.
inline std::uint64_t neveu_rank(TreeArena& t, NodeId x) {
  const int m = static_cast<int>(t[x].depth);
  std::uint64_t rank = 0;
  for (NodeId y = x; y != t.root(); y = t[y].parent) {
    for (NodeId s : t.children(t[y].parent)) {
      if (s == y) break;
      rank += descendants_at(t, s, m);
    }
  }
  return rank;
}

/// Number of generation-m individuals strictly between sup(A) and inf(B).
inline std::uint64_t neveu_distance(TreeArena& t, int generation, const std::vector<NodeId>& setA,
                                    const std::vector<NodeId>& setB) {
  if (setA.empty() || setB.empty()) throw DomainError("neveu_distance: empty set");
  std::uint64_t supA = 0, infB = std::numeric_limits<std::uint64_t>::max();
  for (NodeId a : setA) {
    if (static_cast<int>(t[a].depth) != generation) throw DomainError("neveu_distance: set member off generation");
    supA = std::max(supA, neveu_rank(t, a));
  }
  for (NodeId b : setB) {
    if (static_cast<int>(t[b].depth) != generation) throw DomainError("neveu_distance: set member off generation");
    infB = std::min(infB, neveu_rank(t, b));
  }
  if (supA >= infB) throw DomainError("neveu_distance: extents overlap or are out of order");
  return infB - supA - 1;
}

/// A cluster reduced to its extent at the end generation.
struct ClusterExtent {
  NodeId root = kNoNode;
  std::uint64_t inf = 0;  // rank of the leftmost member
  std::uint64_t sup = 0;  // rank of the rightmost member
  std::uint64_t size = 0;
};

/// D = min_j (inf D_{j+2} - sup D_j), counted as individuals strictly
/// between; families with fewer than 3 clusters have D = infinity.
inline std::uint64_t spacing_statistic(const std::vector<ClusterExtent>& family) {
  std::uint64_t d = kInfiniteSpacing;
  for (std::size_t j = 0; j + 2 < family.size(); ++j) d = std::min(d, family[j + 2].inf - family[j].sup - 1);
  return d;
}

/// Largest sub-family (ordered candidates) with D >= m. Greedy earliest
/// choice is optimal: by induction the j-th greedy pick never lies right of
/// the j-th member of any feasible family.
inline std::vector<ClusterExtent> greedy_family(const std::vector<ClusterExtent>& candidates, std::uint64_t m) {
  std::vector<ClusterExtent> chosen;
  for (const auto& c : candidates) {
    if (chosen.size() < 2 || c.inf - chosen[chosen.size() - 2].sup - 1 >= m) {
      if (!chosen.empty() && c.inf <= chosen.back().sup) continue;
      chosen.push_back(c);
    }
  }
  return chosen;
}

// ===========================================================================
// Regular cuts
// ===========================================================================

struct CutPlan {
  double zeta = 0, delta = 0, epsilon = 0;
  double log_n = 0, Phi = 0;
  double alpha = 0;
  bool alpha_surrogate = false;
  double ks = 0, rs = 0, ss = 0;  // exponents k, r, s
  int ell_target = 0;             // floor((log n)^{1+zeta})
  int ell = 0;                    // after repair: k r + (k-1) h
  int trimmed = 0;                // ell_target - ell
  std::int64_t k = 0, r = 0, h = 0, s = 0;
  bool degenerate = false;  // k < 2
  bool feasible = false;
  std::string infeasible_reason;
  double slack = 0;  // Phi (1 - 2 eps) - (k (alpha r + s) - s)
  bool satisfies_budget = false;

  /// Cluster levels i = 1..k: root and end generations.
  int root_generation(int i) const { return static_cast<int>((i - 1) * (r + h)); }
  int end_generation(int i) const { return static_cast<int>(i * r + (i - 1) * h); }

  /// Paper-scale thresholds for level i: spacing e^{psi(0) h / 2}, count e^{psi(0) r (i-1) / 2}.
  double paper_spacing(double psi0) const { return std::exp(psi0 * static_cast<double>(h) / 2.0); }
  double paper_count(double psi0, int i) const { return std::exp(psi0 * static_cast<double>(r) * (i - 1) / 2.0); }
};

/// Exponents: zeta <= 1: s = (1+zeta)/2 - delta, k = delta/2, r = (1-zeta)/2 + delta/2
/// (0 < delta < zeta/2); zeta > 1: s = (1+zeta)/3, k = delta, r = (1+zeta-4 delta)/3
/// (0 < delta < (2-zeta)/3). Phi = log n; sizes are floors of Phi^exponent.
inline CutPlan build_cut_plan(const EnvironmentSpec& spec, double log_n, double zeta, double epsilon, double delta) {
  if (!(zeta > 0 && zeta < 2)) throw DomainError("build_cut_plan: zeta must lie in (0, 2)");
  if (!(epsilon > 0)) throw DomainError("build_cut_plan: epsilon must be positive");
  if (!(log_n > 1)) throw DomainError("build_cut_plan: log n must exceed 1");
  CutPlan p;
  p.zeta = zeta;
  p.delta = delta;
  p.epsilon = epsilon;
  p.log_n = log_n;
  p.Phi = log_n;
  p.alpha = spec.alpha();
  p.alpha_surrogate = spec.alpha_is_surrogate();
  if (zeta <= 1) {
    if (!(delta > 0 && delta < zeta / 2)) throw DomainError("build_cut_plan: need 0 < delta < zeta/2 when zeta <= 1");
    p.ss = (1 + zeta) / 2 - delta;
    p.ks = delta / 2;
    p.rs = (1 - zeta) / 2 + delta / 2;
  } else {
    if (!(delta > 0 && delta < (2 - zeta) / 3))
      throw DomainError("build_cut_plan: need 0 < delta < (2-zeta)/3 when zeta > 1");
    p.ss = (1 + zeta) / 3;
    p.ks = delta;
    p.rs = (1 + zeta - 4 * delta) / 3;
  }
  p.ell_target = static_cast<int>(std::floor(std::pow(log_n, 1 + zeta)));
  p.k = static_cast<std::int64_t>(std::floor(std::pow(p.Phi, p.ks)));
  p.r = static_cast<std::int64_t>(std::floor(std::pow(p.Phi, p.rs)));
  p.s = static_cast<std::int64_t>(std::floor(std::pow(p.Phi, p.ss)));
  p.ell = p.ell_target;
  auto fail = [&](std::string why) {
    p.feasible = false;
    p.infeasible_reason = std::move(why);
    return p;
  };
  if (p.k < 2) {
    p.degenerate = true;
    return fail("k_n = " + std::to_string(p.k) + " < 2");
  }
  if (p.r < 1) return fail("r_n = " + std::to_string(p.r) + " < 1");
  if (p.s < 1) return fail("s_n = " + std::to_string(p.s) + " < 1");
  if (p.k * p.r > p.ell_target) return fail("k_n r_n > l");
  // integer repair: h = floor((l - k r)/(k - 1)), then l is trimmed so that
  // k r + (k - 1) h = l holds exactly
  p.h = (p.ell_target - p.k * p.r) / (p.k - 1);
  p.ell = static_cast<int>(p.k * p.r + (p.k - 1) * p.h);
  p.trimmed = p.ell_target - p.ell;
  p.slack = p.Phi * (1 - 2 * epsilon) - (static_cast<double>(p.k) * (p.alpha * static_cast<double>(p.r) + static_cast<double>(p.s)) - static_cast<double>(p.s));
  p.satisfies_budget = p.slack >= 0;
  p.feasible = true;
  return p;
}

// ===========================================================================
// Visited-cluster searches
// ===========================================================================

namespace detail {

/// Whether every generation-m descendant of z has been visited, with the
/// member count. Unvisited vertices are only expanded when the offspring law
/// allows extinction (otherwise an unvisited vertex always has descendants).
inline bool cluster_fully_visited(TreeArena& t, const Walker& w, NodeId z, int m, std::uint64_t& members) {
  members = 0;
  const bool may_die = t.spec().offspring.q(0) > 0;
  std::vector<NodeId> stack{z};
  bool full = true;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    const bool vis = w.visited(u) || u == t.root();
    if (static_cast<int>(t[u].depth) == m) {
      ++members;
      if (!vis) full = false;
      continue;
    }
    if (!vis) {
      if (!may_die) return false;
      if (descendants_at(t, u, m) > 0) return false;
      continue;
    }
    auto ch = t.extend(u);
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return full;
}

/// Visited vertices of generation g in Neveu order (the visited set is a
/// subtree containing the root).
inline std::vector<NodeId> visited_generation(const TreeArena& t, const Walker& w, int g) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{t.root()};
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    if (static_cast<int>(t[u].depth) == g) {
      out.push_back(u);
      continue;
    }
    auto ch = t.children(u);
    for (auto it = ch.rbegin(); it != ch.rend(); ++it)
      if (w.visited(*it)) stack.push_back(*it);
  }
  return out;
}

}  // namespace detail

struct LevelScan {
  int level = 0;
  int root_generation = 0;
  int end_generation = 0;
  std::uint64_t candidates = 0;   // fully visited clusters
  std::uint64_t q_found = 0;      // largest family with D >= m
  std::uint64_t D_found = kInfiniteSpacing;
  bool event = false;             // A_i(m, q)
  std::vector<NodeId> witness_roots;
  double q_paper = 0, m_paper = 0;
};

/// A_i(m, q) for every level i = 1..k of the plan.
inline std::vector<LevelScan> scan_A_events(TreeArena& t, const Walker& w, const CutPlan& plan, std::uint64_t m,
                                            const std::vector<double>& q_per_level) {
  if (!plan.feasible) throw DomainError("scan_A_events: plan is infeasible: " + plan.infeasible_reason);
  const double psi0 = psi(t.spec(), 0.0);
  std::vector<LevelScan> out;
  for (int i = 1; i <= plan.k; ++i) {
    LevelScan ls;
    ls.level = i;
    ls.root_generation = plan.root_generation(i);
    ls.end_generation = plan.end_generation(i);
    ls.q_paper = plan.paper_count(psi0, i);
    ls.m_paper = plan.paper_spacing(psi0);
    std::vector<ClusterExtent> cands;
    for (NodeId z : detail::visited_generation(t, w, ls.root_generation)) {
      std::uint64_t members = 0;
      if (!detail::cluster_fully_visited(t, w, z, ls.end_generation, members) || members == 0) continue;
      const auto c = cluster_of(t, z, ls.end_generation);
      cands.push_back({z, neveu_rank(t, c.front()), neveu_rank(t, c.back()), members});
    }
    ls.candidates = cands.size();
    const auto fam = greedy_family(cands, m);
    ls.q_found = fam.size();
    ls.D_found = spacing_statistic(fam);
    for (const auto& c : fam) ls.witness_roots.push_back(c.root);
    const double q = static_cast<std::size_t>(i - 1) < q_per_level.size() ? q_per_level[static_cast<std::size_t>(i - 1)]
                                                                           : q_per_level.back();
    ls.event = static_cast<double>(ls.q_found) >= q;
    out.push_back(ls);
  }
  return out;
}

struct FullClusterWitness {
  NodeId z = kNoNode;
  double fraction = 0.0;
  std::uint64_t cluster_size = 0;
  bool full = false;
  std::uint64_t scanned = 0;
};

/// argmax over |z| = root_gen of the visited fraction of C_l(z). Unvisited z
/// have fraction 0 and are not expanded.
inline FullClusterWitness witness_full_cluster(TreeArena& t, const Walker& w, int l, int root_gen) {
  if (root_gen > l || root_gen < 0) throw DomainError("witness_full_cluster: need 0 <= root_gen <= l");
  FullClusterWitness best;
  for (NodeId z : detail::visited_generation(t, w, root_gen)) {
    ++best.scanned;
    const auto c = cluster_of(t, z, l);
    if (c.empty()) continue;
    std::uint64_t vis = 0;
    for (NodeId y : c) vis += w.visited(y) ? 1 : 0;
    const double frac = static_cast<double>(vis) / static_cast<double>(c.size());
    if (frac > best.fraction || (frac == best.fraction && c.size() > best.cluster_size)) {
      best.z = z;
      best.fraction = frac;
      best.cluster_size = c.size();
    }
  }
  best.full = best.fraction == 1.0;
  return best;
}

struct SpreadWitness {
  bool all = false;              // every ancestor has a visited generation-l descendant
  std::uint64_t ancestors = 0;
  std::uint64_t satisfied = 0;
  NodeId worst = kNoNode;        // first ancestor without one
};

/// min over |z| = ancestor_gen of 1{some y > z with |y| = l visited}.
inline SpreadWitness witness_spread(TreeArena& t, const Walker& w, int l, int ancestor_gen) {
  if (ancestor_gen > l || ancestor_gen < 0) throw DomainError("witness_spread: need 0 <= ancestor_gen <= l");
  SpreadWitness s;
  const auto gen = t.generation_grow(ancestor_gen);
  s.ancestors = gen.size();
  for (NodeId z : gen) {
    bool found = false;
    std::vector<NodeId> stack;
    if (w.visited(z) || z == t.root()) stack.push_back(z);
    while (!stack.empty() && !found) {
      const NodeId u = stack.back();
      stack.pop_back();
      if (static_cast<int>(t[u].depth) == l) {
        found = true;
        break;
      }
      for (NodeId c : t.children(u))
        if (w.visited(c)) stack.push_back(c);
    }
    if (found)
      ++s.satisfied;
    else if (s.worst == kNoNode)
      s.worst = z;
  }
  s.all = s.satisfied == s.ancestors && s.ancestors > 0;
  return s;
}

}  // namespace rwre
