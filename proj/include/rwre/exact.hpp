#pragma once

// Exact quenched hitting probabilities on a materialized tree. The walk is a
// reversible network with conductance e^{-V(y)} on the edge (y<-, y) and
// conductance 1 on the edge (phi<-, phi).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rwre/error.hpp"
#include "rwre/stats.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

namespace rwre {

/// Ancestral path data between phi and z: potentials and prefix sums of e^V.
struct PathReduction {
  std::vector<NodeId> path;         // phi = z_0 < z_1 < ... < z_k = z
  std::vector<double> potentials;   // V(z_i)
  std::vector<double> prefix_sums;  // prefix_sums[i] = sum_{j=1..i} e^{V(z_j)}
  std::vector<double> conductances; // c_i = e^{-V(z_i)}
};

inline PathReduction path_reduction(const TreeArena& t, NodeId z) {
  PathReduction r;
  r.path = t.path_to(z);
  CompensatedSum acc;
  for (std::size_t i = 0; i < r.path.size(); ++i) {
    const double v = t[r.path[i]].V;
    r.potentials.push_back(v);
    r.conductances.push_back(std::exp(-v));
    if (i > 0) acc.add(std::exp(v));
    r.prefix_sums.push_back(acc.value());
  }
  return r;
}

enum class StartAt { ChildOfAncestor, ParentOfTarget };

/// Closed forms on the segment ]x', x]:
///   ChildOfAncestor: P_{x'_x}(T_x < T_{x'}) = e^{V(x'_x)} / sum e^V
///   ParentOfTarget:  P_{x<-}(T_{x'} < T_x) = e^{V(x)} / sum e^V
inline double path_hitting(const TreeArena& t, NodeId xprime, NodeId x, StartAt from) {
  if (xprime == x || !t.is_ancestor(xprime, x)) throw DomainError("path_hitting: x' must be a strict ancestor of x");
  std::vector<NodeId> seg;
  for (NodeId y = x; y != xprime; y = t[y].parent) seg.push_back(y);
  double vmax = -INFINITY;
  for (NodeId y : seg) vmax = std::max(vmax, t[y].V);
  CompensatedSum sum;
  for (NodeId y : seg) sum.add(std::exp(t[y].V - vmax));
  const NodeId num = from == StartAt::ChildOfAncestor ? seg.back() : x;
  return std::exp(t[num].V - vmax) / sum.value();
}

/// p_z = P_phi(T_z < T_phi) = C_eff(phi, z) / c(phi), with c(phi) = sum_{|y|=1} A(y) + 1.
/// Branches hanging off the path do not change the effective conductance.
inline double root_excursion_hit(const TreeArena& t, NodeId z) {
  if (z == t.root()) throw DomainError("root_excursion_hit: z must differ from the root");
  double vmax = -INFINITY;
  for (NodeId y = z; y != t.root(); y = t[y].parent) vmax = std::max(vmax, t[y].V);
  CompensatedSum sum;
  for (NodeId y = z; y != t.root(); y = t[y].parent) sum.add(std::exp(t[y].V - vmax));
  const double c_phi = t[t.root()].child_weight_sum + 1.0;
  return std::exp(-vmax) / (c_phi * sum.value());
}

/// Dense-free exact solve of the first-step equations h(x) = P_x(T_hit < T_avoid)
/// over every materialized vertex (hanging branches included). Each vertex
/// satisfies h(x) = alpha_x + beta_x h(x<-) after eliminating its subtree, so
/// one leaves-up pass and one root-down pass give all values. Unexpanded
/// vertices only step to their parent.
class HittingSolver {
 public:
  HittingSolver(const TreeArena& t, NodeId hit, NodeId avoid) : t_(&t), hit_(hit), avoid_(avoid) {
    const std::size_t n = t.size();
    alpha_.assign(n, 0.0);
    beta_.assign(n, 0.0);
    h_.assign(n, 0.0);
    // ids increase from parent to child, so a reverse id scan is leaves-up
    for (std::size_t i = n; i-- > 0;) {
      const auto id = static_cast<NodeId>(i);
      if (id == hit_ || id == avoid_) {
        alpha_[i] = id == hit_ ? 1.0 : 0.0;
        beta_[i] = 0.0;
        continue;
      }
      const Node& nd = t[id];
      const double denom = nd.child_weight_sum + 1.0;
      double a = 0.0, b = 0.0;
      for (NodeId c : t.children(id)) {
        const double p = t[c].A / denom;
        a += p * alpha_[c];
        b += p * beta_[c];
      }
      const double p_up = 1.0 / denom;
      if (id == t.root()) {
        // phi<- steps straight back to phi
        const double d = 1.0 - b - p_up;
        alpha_[i] = d > 0.0 ? a / d : 0.0;
        beta_[i] = 0.0;
      } else {
        alpha_[i] = a / (1.0 - b);
        beta_[i] = p_up / (1.0 - b);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const NodeId par = t[static_cast<NodeId>(i)].parent;
      h_[i] = alpha_[i] + beta_[i] * (par == kNoNode ? 0.0 : h_[par]);
    }
  }

  /// P_x(T_hit < T_avoid), hitting times counted from time 0.
  double value(NodeId x) const { return h_[x]; }

  /// P_x(T_hit < T_avoid) with x = avoid excluded at time 0, i.e. the
  /// probability of reaching `hit` during an excursion from x.
  double excursion_from(NodeId x) const {
    const Node& nd = (*t_)[x];
    const double denom = nd.child_weight_sum + 1.0;
    double p = 0.0;
    for (NodeId c : t_->children(x)) p += (*t_)[c].A / denom * h_[c];
    if (x != t_->root()) p += 1.0 / denom * h_[nd.parent];  // phi<- only leads back to phi
    return p;
  }

 private:
  const TreeArena* t_;
  NodeId hit_, avoid_;
  std::vector<double> alpha_, beta_, h_;
};

/// p_z by the first-step solve (the oracle for root_excursion_hit).
inline double root_excursion_hit_solver(const TreeArena& t, NodeId z) {
  HittingSolver s(t, z, t.root());
  return s.excursion_from(t.root());
}

/// E^E[K_n(l)] = sum_{|z|=l} (1 - (1 - p_z)^n).
inline double quenched_mean_K(const TreeArena& t, std::uint64_t n, int l) {
  if (n == 0) return 0.0;
  CompensatedSum acc;
  for (NodeId z : t.generation(l)) {
    const double p = root_excursion_hit(t, z);
    acc.add(-std::expm1(static_cast<double>(n) * std::log1p(-p)));
  }
  return acc.value();
}

struct MissBound {
  double exact_miss = 0.0;     // (1 - p_z)^N
  double mc_miss = 0.0;        // empirical rate
  double mc_stderr = 0.0;
  std::uint64_t blocks = 0;
  double bound = 1.0;          // min(1, exp(-c7 N e^{-Vbar(z)} / |z|))
  double analytic_c7 = 0.0;    // 1 / (N0 / eps0 + 1)
};

/// Bound form of the full-visit estimate: exp(-c7 N e^{-Vbar(z)} / |z|), clamped to 1.
inline double miss_bound_value(const TreeArena& t, NodeId z, double N, double c7) {
  const Node& nd = t[z];
  return std::min(1.0, std::exp(-c7 * N * std::exp(-nd.Vbar) / static_cast<double>(nd.depth)));
}

/// Guaranteed constant from ellipticity: p_z >= 1 / ((N0/eps0 + 1) |z| e^{Vbar(z)}).
inline double analytic_c7(const EnvironmentSpec& spec) {
  if (!spec.ellipticity) throw RefusedError("miss bound constant needs ellipticity (weights in [eps0, 1/eps0])");
  return 1.0 / (static_cast<double>(spec.N0) / spec.epsilon0 + 1.0);
}

/// Smallest c with (1 - p_z)^N <= exp(-c N e^{-Vbar} / |z|), i.e.
/// c = -log(1 - p_z) |z| e^{Vbar(z)}; the fitted c7 is a fraction of the
/// minimum of this over a calibration set.
inline double required_c7(const TreeArena& t, NodeId z) {
  const double p = root_excursion_hit(t, z);
  const Node& nd = t[z];
  return -std::log1p(-p) * static_cast<double>(nd.depth) * std::exp(nd.Vbar);
}

/// Empirical miss rate of z within N returns: the walk is cut into
/// consecutive blocks of N returns, which are i.i.d. by the strong Markov
/// property at phi.
inline MissBound miss_probability_bound(TreeArena& t, NodeId z, std::uint64_t N, double c7, std::uint64_t blocks,
                                        std::uint64_t walk_seed, std::uint64_t step_cap = 1'000'000'000ULL) {
  if (!t.spec().ellipticity) throw RefusedError("miss_probability_bound: spec has ellipticity off");
  MissBound mb;
  mb.analytic_c7 = analytic_c7(t.spec());
  const double p = root_excursion_hit(t, z);
  mb.exact_miss = std::exp(static_cast<double>(N) * std::log1p(-p));
  mb.bound = miss_bound_value(t, z, static_cast<double>(N), c7);
  Walker w(t, walk_seed);
  RunningStats miss;
  for (std::uint64_t b = 0; b < blocks; ++b) {
    const std::uint64_t target = w.returns() + N;
    bool hit = false;
    while (w.returns() < target) {
      if (w.steps() >= step_cap) throw CapacityError("miss_probability_bound: step cap exhausted");
      if (w.step() == z) hit = true;
    }
    miss.add(hit ? 0.0 : 1.0);
  }
  mb.mc_miss = miss.mean();
  mb.mc_stderr = miss.stderr_mean();
  mb.blocks = blocks;
  return mb;
}

}  // namespace rwre
