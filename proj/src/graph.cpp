#include "neurofuse/graph.hpp"

#include <algorithm>
#include <string>

#include "neurofuse/error.hpp"

namespace neurofuse {

Graph Graph::from_edges(std::size_t nodes, std::span<const Edge> edges) {
  Graph g(nodes);
  for (const auto& [i, j] : edges) g.add_edge(i, j);
  return g;
}

bool Graph::add_edge(std::size_t i, std::size_t j) {
  if (i >= node_count() || j >= node_count())
    throw DataError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  if (i == j) throw DataError("self-loops are not allowed in a simple graph");
  auto& a = adjacency_[i];
  const auto pos = std::lower_bound(a.begin(), a.end(), j);
  if (pos != a.end() && *pos == j) return false;
  a.insert(pos, j);
  auto& b = adjacency_[j];
  b.insert(std::lower_bound(b.begin(), b.end(), i), i);
  ++edges_;
  return true;
}

bool Graph::remove_edge(std::size_t i, std::size_t j) {
  if (!has_edge(i, j)) return false;
  auto& a = adjacency_[i];
  a.erase(std::lower_bound(a.begin(), a.end(), j));
  auto& b = adjacency_[j];
  b.erase(std::lower_bound(b.begin(), b.end(), i));
  --edges_;
  return true;
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= node_count() || j >= node_count()) return false;
  const auto& a = adjacency_[i];
  return std::binary_search(a.begin(), a.end(), j);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(edges_);
  for (std::size_t i = 0; i < node_count(); ++i) {
    for (std::size_t j : adjacency_[i]) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

Graph Graph::relabeled(std::span<const std::size_t> perm) const {
  if (perm.size() != node_count()) throw DataError("relabeled: permutation size mismatch");
  Graph g(node_count());
  for (const auto& [i, j] : edges()) g.add_edge(perm[i], perm[j]);
  return g;
}

}  // namespace neurofuse
