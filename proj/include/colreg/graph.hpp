#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "colreg/error.hpp"

namespace colreg {

using Vertex = std::size_t;
/// Sorted, duplicate-free list of vertex indices.
using VertexSet = std::vector<Vertex>;

inline VertexSet make_set(std::vector<Vertex> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline bool contains(const VertexSet& s, Vertex v) { return std::binary_search(s.begin(), s.end(), v); }

inline VertexSet set_union(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline VertexSet set_difference(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline VertexSet set_intersection(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Directed acyclic graph over named vertices. Immutable after construction.
class Dag {
 public:
  using Edge = std::pair<Vertex, Vertex>;

  Dag(std::vector<std::string> names, std::vector<Edge> edges)
      : names_(std::move(names)), edges_(std::move(edges)), parents_(names_.size()), children_(names_.size()) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], i).second)
        throw Error(ErrorCode::malformed_input, "duplicate vertex name '" + names_[i] + "'");
    }
    std::set<Edge> seen;
    for (const auto& [from, to] : edges_) {
      require(from < names_.size() && to < names_.size(), ErrorCode::unknown_vertex, "edge endpoint out of range");
      if (from == to) throw Error(ErrorCode::cycle, "self-loop on '" + names_[from] + "'");
      if (!seen.insert({from, to}).second)
        throw Error(ErrorCode::duplicate_edge, names_[from] + " -> " + names_[to]);
      parents_[to].push_back(from);
      children_[from].push_back(to);
    }
    for (auto& p : parents_) p = make_set(std::move(p));
    for (auto& c : children_) c = make_set(std::move(c));
    if (topological_order().size() != names_.size()) throw Error(ErrorCode::cycle, "graph contains a directed cycle");
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(Vertex v) const { return names_.at(v); }
  const std::vector<Edge>& edges() const { return edges_; }
  const VertexSet& parents(Vertex v) const { return parents_.at(check(v)); }
  const VertexSet& children(Vertex v) const { return children_.at(check(v)); }

  Vertex index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error(ErrorCode::unknown_vertex, "no vertex named '" + std::string(name) + "'");
    return it->second;
  }

  VertexSet indices_of(std::initializer_list<std::string_view> names) const {
    std::vector<Vertex> out;
    for (auto n : names) out.push_back(index_of(n));
    return make_set(std::move(out));
  }

  bool has_edge(Vertex from, Vertex to) const { return contains(children(from), to); }
  bool adjacent(Vertex a, Vertex b) const { return has_edge(a, b) || has_edge(b, a); }

  Vertex check(Vertex v) const {
    if (v >= names_.size()) throw Error(ErrorCode::unknown_vertex, "vertex index " + std::to_string(v));
    return v;
  }

  /// Kahn's algorithm; shorter than size() iff the graph has a cycle.
  std::vector<Vertex> topological_order() const {
    std::vector<std::size_t> indegree(names_.size());
    for (std::size_t v = 0; v < names_.size(); ++v) indegree[v] = parents_[v].size();
    std::deque<Vertex> ready;
    for (std::size_t v = 0; v < names_.size(); ++v)
      if (indegree[v] == 0) ready.push_back(v);
    std::vector<Vertex> order;
    while (!ready.empty()) {
      const Vertex v = ready.front();
      ready.pop_front();
      order.push_back(v);
      for (Vertex c : children_[v])
        if (--indegree[c] == 0) ready.push_back(c);
    }
    return order;
  }

  /// Vertices with a directed path into `s`, including `s` itself.
  VertexSet ancestors_of(const VertexSet& s) const {
    std::vector<bool> mark(names_.size(), false);
    std::vector<Vertex> stack(s.begin(), s.end());
    while (!stack.empty()) {
      const Vertex v = stack.back();
      stack.pop_back();
      if (mark[check(v)]) continue;
      mark[v] = true;
      for (Vertex p : parents_[v]) stack.push_back(p);
    }
    VertexSet out;
    for (std::size_t v = 0; v < mark.size(); ++v)
      if (mark[v]) out.push_back(v);
    return out;
  }

  VertexSet descendants_of(Vertex v) const {
    std::vector<bool> mark(names_.size(), false);
    std::vector<Vertex> stack{check(v)};
    while (!stack.empty()) {
      const Vertex u = stack.back();
      stack.pop_back();
      if (mark[u]) continue;
      mark[u] = true;
      for (Vertex c : children_[u]) stack.push_back(c);
    }
    VertexSet out;
    for (std::size_t u = 0; u < mark.size(); ++u)
      if (mark[u]) out.push_back(u);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Edge> edges_;
  std::vector<VertexSet> parents_;
  std::vector<VertexSet> children_;
  std::map<std::string, Vertex> index_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool valid_vertex_name(std::string_view s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '>' || c == '#'; });
}

}  // namespace detail

/// Parses one "parent -> child" edge per line. '#' starts a comment; blank
/// lines are ignored. Vertices are numbered in order of first appearance.
inline Dag parse_dag(std::string_view text) {
  std::vector<std::string> names;
  std::map<std::string, Vertex, std::less<>> index;
  std::vector<Dag::Edge> edges;
  auto vertex = [&](std::string_view name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    names.emplace_back(name);
    index.emplace(std::string(name), names.size() - 1);
    return names.size() - 1;
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto arrow = line.find("->");
    if (arrow == std::string_view::npos)
      throw Error(ErrorCode::malformed_input, "line " + std::to_string(line_no) + ": expected 'parent -> child'");
    const auto parent = detail::trim(line.substr(0, arrow));
    const auto child = detail::trim(line.substr(arrow + 2));
    if (!detail::valid_vertex_name(parent) || !detail::valid_vertex_name(child))
      throw Error(ErrorCode::malformed_input, "line " + std::to_string(line_no) + ": bad vertex name");
    const Vertex p = vertex(parent);
    const Vertex c = vertex(child);
    edges.emplace_back(p, c);
  }
  return Dag(std::move(names), std::move(edges));
}

inline std::string format_dag(const Dag& dag) {
  std::ostringstream out;
  for (const auto& [p, c] : dag.edges()) out << dag.name(p) << " -> " << dag.name(c) << '\n';
  return out.str();
}

/// Parents, children and spouses (other parents of children) of y.
inline VertexSet markov_boundary(const Dag& dag, Vertex y) {
  dag.check(y);
  std::vector<Vertex> out(dag.parents(y).begin(), dag.parents(y).end());
  for (Vertex c : dag.children(y)) {
    out.push_back(c);
    for (Vertex p : dag.parents(c))
      if (p != y) out.push_back(p);
  }
  return make_set(std::move(out));
}

/// d-separation of `a` and `b` given `s` via the reachability ("Bayes-ball")
/// traversal: a trail may pass a non-collider outside `s`, and a collider
/// only if it is an ancestor of (or in) `s`.
inline bool d_separated(const Dag& dag, const VertexSet& a, const VertexSet& b, const VertexSet& s) {
  for (const VertexSet* set : {&a, &b, &s})
    for (Vertex v : *set) dag.check(v);
  const VertexSet sa = make_set(a), sb = make_set(b), ss = make_set(s);
  if (!set_intersection(sa, sb).empty() || !set_intersection(sa, ss).empty() || !set_intersection(sb, ss).empty())
    throw Error(ErrorCode::overlapping_sets, "d_separated requires pairwise disjoint sets");

  const VertexSet anc = dag.ancestors_of(ss);
  const std::size_t n = dag.size();
  // visited[v][0]: arrived from a child (moving up); visited[v][1]: from a parent.
  std::vector<std::array<bool, 2>> visited(n, {false, false});
  std::deque<std::pair<Vertex, int>> queue;
  for (Vertex v : sa) queue.emplace_back(v, 0);
  while (!queue.empty()) {
    const auto [v, dir] = queue.front();
    queue.pop_front();
    if (visited[v][dir]) continue;
    visited[v][dir] = true;
    const bool observed = contains(ss, v);
    if (!observed && contains(sb, v)) return false;
    if (dir == 0 && !observed) {
      for (Vertex p : dag.parents(v)) queue.emplace_back(p, 0);
      for (Vertex c : dag.children(v)) queue.emplace_back(c, 1);
    } else if (dir == 1) {
      if (!observed)
        for (Vertex c : dag.children(v)) queue.emplace_back(c, 1);
      if (contains(anc, v))
        for (Vertex p : dag.parents(v)) queue.emplace_back(p, 0);
    }
  }
  return true;
}

/// Boundary vertices with at least two parents inside Mb(y) + {y}, one of
/// which lies in Mb(y) but is not adjacent to y. Nonempty exactly when the
/// boundary holds a vertex that some subset of the boundary separates from y.
inline VertexSet boundary_colliders(const Dag& dag, Vertex y) {
  const VertexSet mb = markov_boundary(dag, y);
  VertexSet boundary_and_y = set_union(mb, {y});
  VertexSet out;
  for (Vertex v : mb) {
    const VertexSet inside = set_intersection(dag.parents(v), boundary_and_y);
    if (inside.size() < 2) continue;
    const bool has_far_parent = std::any_of(inside.begin(), inside.end(),
                                            [&](Vertex p) { return p != y && !dag.adjacent(p, y); });
    if (has_far_parent) out.push_back(v);
  }
  return out;
}

/// Markov boundary split into children (X1), parents (X3) and the rest (X2).
struct ColliderPartition {
  Vertex target;
  VertexSet children;
  VertexSet others;
  VertexSet parents;
};

inline ColliderPartition collider_partition(const Dag& dag, Vertex y) {
  const VertexSet mb = markov_boundary(dag, y);
  if (mb.empty()) throw Error(ErrorCode::empty_boundary, "Markov boundary of '" + dag.name(y) + "' is empty");
  ColliderPartition part{y, set_intersection(dag.children(y), mb), {}, dag.parents(y)};
  part.others = set_difference(set_difference(mb, part.children), part.parents);
  for (Vertex c : part.children)
    for (Vertex o : part.others)
      if (dag.has_edge(c, o))
        throw Error(ErrorCode::partition_invalid, "edge " + dag.name(c) + " -> " + dag.name(o) +
                                                      " runs from a child of the target to another boundary vertex");
  if (!part.others.empty() && !d_separated(dag, {y}, part.others, part.parents))
    throw Error(ErrorCode::partition_invalid, "target is not d-separated from the other boundary vertices given its parents");
  return part;
}

}  // namespace colreg
