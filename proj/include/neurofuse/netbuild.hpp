#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurofuse/graph.hpp"

namespace neurofuse::netbuild {

enum class Tissue { GM, WM };

/// Subjects x regions volume table for one tissue.
struct RegionalVolumeTable {
  Eigen::MatrixXd values;
  std::vector<std::string> region_names;
  std::vector<std::string> subject_ids;
  Tissue tissue = Tissue::GM;

  std::size_t regions() const { return static_cast<std::size_t>(values.cols()); }
};

void validate(const RegionalVolumeTable& table);

/// Rows of `table` whose subject id is in `ids`, in `ids` order.
RegionalVolumeTable select_subjects(const RegionalVolumeTable& table,
                                    std::span<const std::string> ids);

struct AtlasRegion {
  int id = 0;
  std::string name;
  std::string hemisphere;
};

/// Sum of voxel values per region, in `region_ids` order. Labels not present in
/// `region_ids` are rejected.
std::vector<double> aggregate_regional_volumes(std::span<const double> voxels,
                                               std::span<const int> labels,
                                               std::span<const int> region_ids);

/// Rectangular GM (rows) x WM (columns) Pearson matrix across subjects.
struct AssociationMatrix {
  Eigen::MatrixXd entries;
  std::size_t subjects = 0;

  std::size_t regions() const { return static_cast<std::size_t>(entries.rows()); }
};

AssociationMatrix build_association_matrix(const RegionalVolumeTable& gm,
                                           const RegionalVolumeTable& wm);

/// floor(sqrt(R)), at least 1.
std::size_t default_k(std::size_t regions);

enum class RankBy { value, magnitude };

struct MutualAdjacency {
  std::size_t regions = 0;
  std::size_t k = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> row_top;  // j in top-K of GM row i
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> col_top;  // i in top-K of WM column j
  std::vector<Edge> mutual_pairs;  // (gm i, wm j), sorted

  bool mutual(std::size_t i, std::size_t j) const { return row_top(i, j) && col_top(i, j); }
};

/// Mutual K-nearest-neighbour binarisation. Each GM row keeps its K largest entries and
/// each WM column keeps its K largest; ties go to the lower index.
MutualAdjacency mknn_threshold(const Eigen::MatrixXd& association, std::size_t k,
                               RankBy rank_by = RankBy::value);

struct RegionGraph {
  Graph graph;
  std::vector<std::size_t> isolated;
};

/// OR-symmetrised mutual pairs with the diagonal dropped.
RegionGraph collapse_region_graph(const MutualAdjacency& adjacency);

/// 2R-node view: GM_i is node i, WM_j is node R + j.
Graph bipartite_graph(const MutualAdjacency& adjacency, bool include_self_pairs = true);

// ---- files ------------------------------------------------------------------

std::vector<AtlasRegion> read_atlas_csv(const std::filesystem::path& path);
void write_atlas_csv(const std::filesystem::path& path, std::span<const AtlasRegion> atlas);

/// One integer label per line.
std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const int> labels);

/// `subject_id,<region names...>`.
RegionalVolumeTable read_region_table_csv(const std::filesystem::path& path, Tissue tissue);
void write_region_table_csv(const std::filesystem::path& path, const RegionalVolumeTable& table);

/// `gm_region,wm_region,weight,mutual`: every pair selected from at least one side.
void write_edge_list_csv(const std::filesystem::path& path, const MutualAdjacency& adjacency,
                         const AssociationMatrix& association,
                         std::span<const std::string> region_names, bool include_self_pairs);

/// `region_i,region_j`.
void write_region_graph_csv(const std::filesystem::path& path, const Graph& graph,
                            std::span<const std::string> region_names);
Graph read_region_graph_csv(const std::filesystem::path& path,
                            std::span<const std::string> region_names);

/// `region,name,degree,isolated`.
void write_node_table_csv(const std::filesystem::path& path, const RegionGraph& graph,
                          std::span<const std::string> region_names);

}  // namespace neurofuse::netbuild
