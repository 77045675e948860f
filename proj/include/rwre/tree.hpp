#pragma once

// Lazily grown Galton-Watson tree carrying the environment. Node randomness is
// keyed by the node's position (hash of the child-index path), so the tree is
// the same whatever order it gets extended in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/envspec.hpp"
#include "rwre/error.hpp"
#include "rwre/random.hpp"

namespace rwre {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct Node {
  NodeId parent = kNoNode;
  NodeId first_child = kNoNode;
  std::uint32_t child_count = 0;
  std::uint32_t depth = 0;
  double A = 1.0;
  double V = 0.0;
  double Vbar = -INFINITY;  // root: max over an empty path
  double child_weight_sum = 0.0;
  std::uint64_t key = 0;
  bool expanded = false;
};

struct GenerationStats {
  std::uint64_t Z = 0;
  double W = 0.0;
  double min_Vbar = INFINITY;
  double max_Vbar = -INFINITY;
  NodeId argmin = kNoNode;
};

class TreeArena {
 public:
  static constexpr std::size_t kDefaultNodeCap = 100'000'000;

  TreeArena(EnvironmentSpec spec, std::uint64_t seed, std::size_t node_cap = kDefaultNodeCap)
      : spec_(std::move(spec)), base_seed_(seed), seed_(seed), node_cap_(node_cap) {
    reset();
  }

  const EnvironmentSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t survival_resamples() const noexcept { return resamples_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t node_cap() const noexcept { return node_cap_; }
  NodeId root() const noexcept { return 0; }

  const Node& node(NodeId id) const { return nodes_[id]; }
  const Node& operator[](NodeId id) const { return nodes_[id]; }

  /// Children in Neveu order (contiguous ids). Empty if not expanded.
  std::span<const NodeId> children(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.child_count == 0) return {};
    return {child_ids_.data() + n.first_child, n.child_count};
  }

  bool expanded(NodeId id) const { return nodes_[id].expanded; }

  /// Samples the children of `id` once; later calls return the same handles.
  std::span<const NodeId> extend(NodeId id) {
    if (nodes_[id].expanded) return children(id);
    const Node parent = nodes_[id];
    SplitMix64 eng(combine(seed_, parent.key));
    const int count = spec_.offspring.sample(eng);
    if (nodes_.size() + static_cast<std::size_t>(count) > node_cap_)
      throw CapacityError("tree node cap of " + std::to_string(node_cap_) + " exceeded");
    const auto first = static_cast<NodeId>(nodes_.size());
    double sum = 0.0;
    for (int i = 0; i < count; ++i) {
      Node c;
      c.parent = id;
      c.depth = parent.depth + 1;
      c.A = spec_.weights.sample(eng);
      c.V = parent.V - std::log(c.A);
      c.Vbar = std::max(parent.Vbar, c.V);
      c.key = combine(parent.key, static_cast<std::uint64_t>(i) + 1);
      sum += c.A;
      nodes_.push_back(c);
    }
    Node& n = nodes_[id];
    n.expanded = true;
    n.child_count = static_cast<std::uint32_t>(count);
    n.first_child = static_cast<NodeId>(child_ids_.size());
    n.child_weight_sum = sum;
    for (int i = 0; i < count; ++i) child_ids_.push_back(first + static_cast<NodeId>(i));
    return children(id);
  }

  /// Materializes generations 1..depth; returns (Z_1, ..., Z_depth). With
  /// condition_on_survival, an extinct tree is discarded and regrown from a
  /// derived seed; the number of discards is kept in survival_resamples().
  std::vector<std::uint64_t> grow_to_depth(int depth, bool condition_on_survival = false) {
    if (depth < 1) throw DomainError("grow_to_depth: depth must be >= 1");
    while (true) {
      std::vector<std::uint64_t> z;
      std::vector<NodeId> level{root()};
      for (int k = 1; k <= depth; ++k) {
        std::vector<NodeId> next;
        for (NodeId id : level) {
          auto ch = extend(id);
          next.insert(next.end(), ch.begin(), ch.end());
        }
        level = std::move(next);
        z.push_back(level.size());
      }
      if (!condition_on_survival || !level.empty()) return z;
      ++resamples_;
      seed_ = combine(base_seed_, resamples_);
      reset();
    }
  }

  /// Generation k in Neveu (left-to-right) order. Requires every node of
  /// depth < k to be expanded.
  std::vector<NodeId> generation(int k) const {
    std::vector<NodeId> level{root()};
    for (int g = 0; g < k; ++g) {
      std::vector<NodeId> next;
      for (NodeId id : level) {
        if (!nodes_[id].expanded)
          throw NotGrownError("generation " + std::to_string(k) + " is not fully materialized");
        auto ch = children(id);
        next.insert(next.end(), ch.begin(), ch.end());
      }
      level = std::move(next);
    }
    return level;
  }

  /// As generation(), extending nodes as needed.
  std::vector<NodeId> generation_grow(int k) {
    std::vector<NodeId> level{root()};
    for (int g = 0; g < k; ++g) {
      std::vector<NodeId> next;
      for (NodeId id : level) {
        auto ch = extend(id);
        next.insert(next.end(), ch.begin(), ch.end());
      }
      level = std::move(next);
    }
    return level;
  }

  /// Ancestral path root = z_0, ..., z_k = x.
  std::vector<NodeId> path_to(NodeId x) const {
    std::vector<NodeId> p;
    for (NodeId y = x; y != kNoNode; y = nodes_[y].parent) p.push_back(y);
    std::reverse(p.begin(), p.end());
    return p;
  }

  bool is_ancestor(NodeId a, NodeId x) const {
    for (NodeId y = x; y != kNoNode; y = nodes_[y].parent)
      if (y == a) return true;
    return false;
  }

  /// Marks every node expanded, so the tree stops growing: unexpanded nodes
  /// become leaves.
  void freeze() {
    for (auto& n : nodes_) n.expanded = true;
  }

  /// Builds an arena from explicit node records (the dump loader). Loaded
  /// trees are frozen: every node counts as expanded.
  static TreeArena from_records(EnvironmentSpec spec, const std::vector<Node>& records) {
    TreeArena t(std::move(spec), 0);
    t.nodes_.clear();
    t.child_ids_.clear();
    t.nodes_ = records;
    for (auto& n : t.nodes_) {
      n.child_count = 0;
      n.first_child = kNoNode;
      n.child_weight_sum = 0.0;
      n.expanded = true;
    }
    for (NodeId id = 1; id < t.nodes_.size(); ++id) {
      Node& p = t.nodes_[t.nodes_[id].parent];
      if (p.child_count == 0) {
        p.first_child = static_cast<NodeId>(t.child_ids_.size());
      } else if (t.child_ids_[p.first_child + p.child_count - 1] != id - 1) {
        throw ParseError("tree dump: children of a node must have consecutive ids");
      }
      t.child_ids_.push_back(id);
      ++p.child_count;
      p.child_weight_sum += t.nodes_[id].A;
    }
    return t;
  }

 private:
  void reset() {
    nodes_.clear();
    child_ids_.clear();
    Node r;
    r.key = mix64(seed_ ^ 0x5eedULL);
    nodes_.push_back(r);
  }

  EnvironmentSpec spec_;
  std::uint64_t base_seed_;
  std::uint64_t seed_;
  std::size_t node_cap_;
  std::uint64_t resamples_ = 0;
  std::vector<Node> nodes_;
  std::vector<NodeId> child_ids_;
};

/// Generation statistics; W_k = Z_k e^{-psi(0) k}.
inline GenerationStats generation_stats(const TreeArena& t, int k) {
  GenerationStats s;
  const auto gen = t.generation(k);
  s.Z = gen.size();
  s.W = static_cast<double>(s.Z) * std::exp(-psi(t.spec(), 0.0) * k);
  for (NodeId id : gen) {
    const double vb = t[id].Vbar;
    if (vb < s.min_Vbar) {
      s.min_Vbar = vb;
      s.argmin = id;
    }
    s.max_Vbar = std::max(s.max_Vbar, vb);
  }
  return s;
}

enum class Barrier { FromRoot, Relative };

namespace detail {

template <class Extend>
std::uint64_t accessible_impl(const TreeArena& t, double a, int k, NodeId origin, Barrier barrier, Extend&& ext) {
  const auto& o = t[origin];
  if (static_cast<int>(o.depth) >= k) throw DomainError("accessible_count: k must exceed depth(origin)");
  // stack of (node, running max of V relative to origin)
  struct Item {
    NodeId id;
    double vmax;
  };
  std::vector<Item> stack{{origin, -INFINITY}};
  std::uint64_t count = 0;
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    for (NodeId c : ext(it.id)) {
      const auto& n = t[c];
      const double vb = barrier == Barrier::FromRoot ? n.Vbar : std::max(it.vmax, n.V - o.V);
      if (vb > a) continue;  // V-bar is non-decreasing along rays
      if (static_cast<int>(n.depth) == k)
        ++count;
      else
        stack.push_back({c, vb});
    }
  }
  return count;
}

}  // namespace detail

/// K*_a(k) below origin: #{u > origin, |u| = k, V-bar(u) <= a}, by pruned
/// depth-first traversal. Throws NotGrownError if a needed node is unexpanded.
inline std::uint64_t accessible_count(const TreeArena& t, double a, int k, NodeId origin = 0,
                                      Barrier barrier = Barrier::FromRoot) {
  return detail::accessible_impl(t, a, k, origin, barrier, [&](NodeId id) {
    if (!t.expanded(id)) throw NotGrownError("accessible_count: subtree not grown to generation " + std::to_string(k));
    return t.children(id);
  });
}

/// Same count, growing only the nodes the pruned traversal visits. This is
/// the route for generations far beyond what a full tree could hold.
inline std::uint64_t accessible_count_grow(TreeArena& t, double a, int k, NodeId origin = 0,
                                           Barrier barrier = Barrier::FromRoot) {
  return detail::accessible_impl(t, a, k, origin, barrier, [&](NodeId id) { return t.extend(id); });
}

// ---------------------------------------------------------------------------
// Dump format: "id parent depth A V Vbar", ordered by id, root parent -1
// ---------------------------------------------------------------------------

inline void dump_tree(const TreeArena& t, std::ostream& os) {
  for (NodeId id = 0; id < t.size(); ++id) {
    const auto& n = t[id];
    os << id << ' ' << (n.parent == kNoNode ? std::string("-1") : std::to_string(n.parent)) << ' ' << n.depth << ' '
       << format_double(n.A) << ' ' << format_double(n.V) << ' ' << format_double(n.Vbar) << '\n';
  }
}

inline TreeArena load_tree(const EnvironmentSpec& spec, std::istream& is) {
  std::vector<Node> records;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[6];
    for (auto& s : f)
      if (!(ls >> s)) throw ParseError("tree dump: expected 6 fields: " + line);
    Node n;
    if (parse_double(f[0]) != static_cast<double>(records.size())) throw ParseError("tree dump: ids must be 0..n-1");
    n.parent = f[1] == "-1" ? kNoNode : static_cast<NodeId>(parse_double(f[1]));
    n.depth = static_cast<std::uint32_t>(parse_double(f[2]));
    n.A = parse_double(f[3]);
    n.V = parse_double(f[4]);
    n.Vbar = parse_double(f[5]);
    if (records.empty() != (n.parent == kNoNode)) throw ParseError("tree dump: only node 0 may be the root");
    if (n.parent != kNoNode && n.parent >= records.size()) throw ParseError("tree dump: parent after child");
    records.push_back(n);
  }
  if (records.empty()) throw ParseError("tree dump: empty");
  return TreeArena::from_records(spec, records);
}

}  // namespace rwre
