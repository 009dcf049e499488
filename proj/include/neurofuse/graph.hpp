#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace neurofuse {

using Edge = std::pair<std::size_t, std::size_t>;

/// Simple undirected graph: no self-loops, no parallel edges. Neighbour lists are kept
/// sorted so iteration order is a function of the edge set alone.
class Graph {
 public:
  explicit Graph(std::size_t nodes = 0) : adjacency_(nodes) {}

  static Graph from_edges(std::size_t nodes, std::span<const Edge> edges);

  /// Returns false if the edge already exists. Throws on self-loops or bad indices.
  bool add_edge(std::size_t i, std::size_t j);
  bool remove_edge(std::size_t i, std::size_t j);
  bool has_edge(std::size_t i, std::size_t j) const;

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edges_; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_[i]; }

  /// Edges with i < j in lexicographic order.
  std::vector<Edge> edges() const;

  /// Graph with node v relabelled to perm[v].
  Graph relabeled(std::span<const std::size_t> perm) const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.adjacency_ == b.adjacency_; }

 private:
  std::vector<std::vector<std::size_t>> adjacency_;
  std::size_t edges_ = 0;
};

}  // namespace neurofuse
