#pragma once

// Quenched random walk on a TreeArena, with local times and the generation
// observables M_n(m), K_n(m), R_n and X_n*.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "rwre/error.hpp"
#include "rwre/random.hpp"
#include "rwre/tree.hpp"

namespace rwre {

/// The extra vertex above the root.
inline constexpr NodeId kPhiBack = kNoNode - 1;

struct RunResult {
  bool completed = false;  // false: step cap hit first (censored)
  std::uint64_t steps = 0;
  std::uint64_t returns = 0;
};

struct Observables {
  std::map<int, std::uint64_t> M;
  int R = 0;
  int Xstar = 0;
};

class Walker {
 public:
  Walker(TreeArena& arena, std::uint64_t walk_seed) : arena_(&arena), eng_(walk_seed) {
    local_.assign(arena.size(), 0);
    visited_per_depth_.assign(1, 0);
  }

  NodeId position() const noexcept { return pos_; }
  std::uint64_t steps() const noexcept { return steps_; }
  std::uint64_t returns() const noexcept { return returns_; }
  int max_depth() const noexcept { return xstar_; }
  const TreeArena& arena() const noexcept { return *arena_; }

  std::uint64_t local_time(NodeId id) const {
    if (id == kPhiBack) return local_phi_back_;
    return id < local_.size() ? local_[id] : 0;
  }
  bool visited(NodeId id) const { return local_time(id) > 0; }

  /// Sum of local times over every vertex, phi-back included. Equals steps().
  std::uint64_t local_time_total() const {
    std::uint64_t s = local_phi_back_;
    for (auto v : local_) s += v;
    return s;
  }

  /// M_n(m): number of generation-m vertices visited so far.
  std::uint64_t visited_count(int m) const {
    return m >= 0 && static_cast<std::size_t>(m) < visited_per_depth_.size() ? visited_per_depth_[m] : 0;
  }

  /// Return indices at which the generation counts get frozen (for K_n).
  void snapshot_at_returns(std::vector<std::uint64_t> indices) {
    snap_at_ = std::set<std::uint64_t>(indices.begin(), indices.end());
  }

  /// K_n(m) = M_{T^n}(m). n = 0 gives 0 by the convention T^0 = 0.
  std::uint64_t K(int m, std::uint64_t n) const {
    if (n == 0) return 0;
    auto it = snapshots_.find(n);
    if (it == snapshots_.end()) {
      if (n > returns_) throw DomainError("K: return index beyond completed returns");
      throw DomainError("K: return index was not registered with snapshot_at_returns");
    }
    const auto& v = it->second;
    return m >= 0 && static_cast<std::size_t>(m) < v.size() ? v[m] : 0;
  }

  NodeId step() {
    NodeId next;
    if (pos_ == kPhiBack) {
      next = arena_->root();
    } else {
      auto ch = arena_->extend(pos_);
      const Node& n = arena_->node(pos_);
      double u = uniform01(eng_) * (n.child_weight_sum + 1.0);
      next = pos_ == arena_->root() ? kPhiBack : n.parent;
      for (NodeId c : ch) {
        const double a = arena_->node(c).A;
        if (u < a) {
          next = c;
          break;
        }
        u -= a;
      }
    }
    visit(next);
    return next;
  }

  /// Steps until the n_returns-th return to the root or until step_cap total
  /// steps, whichever comes first.
  RunResult run_until_returns(std::uint64_t n_returns, std::uint64_t step_cap) {
    if (n_returns < 1) throw DomainError("run_until_returns: n_returns must be >= 1");
    while (returns_ < n_returns && steps_ < step_cap) step();
    return {returns_ >= n_returns, steps_, returns_};
  }

  RunResult run_steps(std::uint64_t n) {
    const std::uint64_t target = steps_ + n;
    while (steps_ < target) step();
    return {true, steps_, returns_};
  }

 private:
  void visit(NodeId next) {
    pos_ = next;
    ++steps_;
    if (next == kPhiBack) {
      ++local_phi_back_;
      return;
    }
    if (local_.size() < arena_->size()) local_.resize(std::max<std::size_t>(arena_->size(), 2 * local_.size()), 0);
    if (local_[next]++ == 0) {
      const auto d = arena_->node(next).depth;
      if (visited_per_depth_.size() <= d) visited_per_depth_.resize(d + 1, 0);
      ++visited_per_depth_[d];
      xstar_ = std::max(xstar_, static_cast<int>(d));
    }
    if (next == arena_->root()) {
      ++returns_;
      if (snap_at_.count(returns_)) snapshots_[returns_] = visited_per_depth_;
    }
  }

  TreeArena* arena_;
  Xoshiro256 eng_;
  NodeId pos_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t returns_ = 0;
  std::uint64_t local_phi_back_ = 0;
  int xstar_ = 0;
  std::vector<std::uint64_t> local_;
  std::vector<std::uint64_t> visited_per_depth_;
  std::set<std::uint64_t> snap_at_;
  std::map<std::uint64_t, std::vector<std::uint64_t>> snapshots_;
};

/// R_n: the largest k such that every vertex of generations 1..k has been
/// visited. Grows full generations as needed, at most r_cap of them.
inline int largest_full_generation(TreeArena& arena, const Walker& w, int r_cap = 200) {
  std::vector<NodeId> level{arena.root()};
  for (int k = 1; k <= r_cap; ++k) {
    std::vector<NodeId> next;
    for (NodeId id : level) {
      auto ch = arena.extend(id);
      next.insert(next.end(), ch.begin(), ch.end());
    }
    for (NodeId id : next)
      if (!w.visited(id)) return k - 1;
    if (next.empty()) return r_cap;  // extinct: every generation vacuously visited
    level = std::move(next);
  }
  return r_cap;
}

inline Observables observables(TreeArena& arena, const Walker& w, const std::vector<int>& generations,
                               int r_cap = 200) {
  Observables o;
  for (int m : generations) o.M[m] = w.visited_count(m);
  o.R = largest_full_generation(arena, w, r_cap);
  o.Xstar = w.max_depth();
  return o;
}

}  // namespace rwre
