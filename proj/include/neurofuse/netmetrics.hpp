#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurofuse/graph.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/stats.hpp"

namespace neurofuse::netmetrics {

struct DegreeDensity {
  std::vector<double> degree;
  double average_degree = 0.0;
  double density = 0.0;
};

/// Isolated nodes count toward N. Throws for N < 2.
DegreeDensity degree_density(const Graph& g);

/// Brandes betweenness, raw pair counts (each unordered pair once). `normalized` divides
/// by (N-1)(N-2)/2.
std::vector<double> betweenness(const Graph& g, bool normalized = false);

struct Clustering {
  std::vector<double> nodal;  // 0 for degree < 2
  double transitivity = 0.0;  // 0 when the graph has no 2-paths
  double mean = 0.0;
};

Clustering clustering_transitivity(const Graph& g);

/// Hop distances from `source`; unreachable nodes get -1.
std::vector<int> bfs_distances(const Graph& g, std::size_t source);

struct PathEfficiency {
  std::optional<double> path_length;  // mean over finite distances; empty if none
  double efficiency = 0.0;
};

PathEfficiency path_efficiency(const Graph& g);

/// Principal eigenvector on the largest connected component (lowest node index wins a
/// size tie), unit norm, zero elsewhere. Throws on an edgeless graph.
std::vector<double> eigenvector_centrality(const Graph& g);

/// Degree assortativity over both orientations of every edge. Throws NumericalError
/// when the endpoint degrees have no variance, DataError when there are no edges.
double assortativity(const Graph& g);

struct CommunityPartition {
  std::vector<std::size_t> module;  // module id per node, numbered by first appearance
  double modularity = 0.0;

  std::size_t module_count() const;
};

double modularity(const Graph& g, std::span<const std::size_t> module);

/// Louvain-style greedy modularity maximisation; node visiting order drawn from `seed`.
CommunityPartition community_partition(const Graph& g, std::uint64_t seed);

/// Partition from arbitrary group labels (e.g. hemisphere), numbered by first appearance.
CommunityPartition partition_from_labels(const Graph& g, std::span<const std::string> labels);

std::vector<double> participation_coefficient(const Graph& g, std::span<const std::size_t> module);

/// Maslov-Sneppen double-edge swaps until `target` swaps are accepted or `max_attempts`
/// tries are used. Returns the rewired graph and the accepted count.
std::pair<Graph, std::size_t> rewire(const Graph& g, std::size_t target, std::size_t max_attempts,
                                     Rng& rng);

/// Uniform random simple graph with N nodes and E edges.
Graph random_gnm(std::size_t nodes, std::size_t edges, Rng& rng);

struct SmallWorld {
  double gamma = 0.0;
  double lambda = 0.0;
  double null_clustering = 0.0;
  double null_path_length = 0.0;
  std::size_t n_null = 0;
  std::size_t fallback_nulls = 0;  // nulls replaced by G(N,E) after rewiring stalled

  bool fallback() const { return fallback_nulls > 0; }
};

SmallWorld small_world_norms(const Graph& g, std::size_t n_null, std::uint64_t seed);

enum class HubMode { either, both };

HubMode hub_mode_from_string(const std::string& text);
std::string to_string(HubMode mode);

struct HubSet {
  std::vector<std::size_t> hubs;
  std::vector<std::string> criteria;  // per node: "", "degree", "betweenness" or "degree+betweenness"
  double degree_cutoff = 0.0;
  double betweenness_cutoff = 0.0;
};

/// Cutoff per metric is mean + sample sd over all nodes; a node exceeds it strictly.
HubSet find_hubs(std::span<const double> degree, std::span<const double> betweenness,
                 HubMode mode = HubMode::either);

enum class CompareMethod { student_t, permutation };

stats::TestResult compare_networks(std::span<const double> a, std::span<const double> b,
                                   CompareMethod method, std::size_t n_perm = 10000,
                                   std::uint64_t seed = 0);

enum class PartitionMode { modularity, hemisphere };

struct MetricsOptions {
  std::size_t n_null = 100;
  std::uint64_t seed = 0;
  PartitionMode partition = PartitionMode::modularity;
  std::vector<std::string> hemispheres;  // required for PartitionMode::hemisphere
};

struct GraphMetricsReport {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double density = 0.0;
  double average_degree = 0.0;
  double global_efficiency = 0.0;
  std::optional<double> path_length;
  double transitivity = 0.0;
  double mean_clustering = 0.0;
  std::optional<double> assortativity;
  double modularity = 0.0;
  std::optional<double> gamma;
  std::optional<double> lambda;
  bool small_world_fallback = false;

  std::vector<double> degree;
  std::vector<double> betweenness;
  std::vector<double> clustering;
  std::vector<double> eigenvector;
  std::vector<double> participation;
  std::vector<std::size_t> module;

  std::vector<std::string> notices;  // metrics left undefined and why
};

GraphMetricsReport compute_metrics(const Graph& g, const MetricsOptions& options);

void write_metrics_json(const std::filesystem::path& path, const GraphMetricsReport& report,
                        std::span<const std::string> region_names);

/// Nodal betweenness (or another nodal array) from a metrics JSON file.
std::vector<double> read_nodal_metric(const std::filesystem::path& path, const std::string& metric);

/// `region,degree,betweenness,criteria`, hubs only.
void write_hubs_csv(const std::filesystem::path& path, const HubSet& hubs,
                    std::span<const double> degree, std::span<const double> betweenness,
                    std::span<const std::string> region_names);

}  // namespace neurofuse::netmetrics
