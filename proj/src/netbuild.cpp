#include "neurofuse/netbuild.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"

namespace neurofuse::netbuild {

namespace {

std::string tissue_name(Tissue t) { return t == Tissue::GM ? "GM" : "WM"; }

}  // namespace

void validate(const RegionalVolumeTable& t) {
  if (t.values.cols() < 2) throw DataError(tissue_name(t.tissue) + " table needs at least 2 regions");
  if (t.region_names.size() != t.regions())
    throw DataError(tissue_name(t.tissue) + " table: region names do not match columns");
  if (t.subject_ids.size() != static_cast<std::size_t>(t.values.rows()))
    throw DataError(tissue_name(t.tissue) + " table: subject ids do not match rows");
  if (!t.values.allFinite()) throw DataError(tissue_name(t.tissue) + " table has non-finite values");
  if ((t.values.array() < 0.0).any())
    throw DataError(tissue_name(t.tissue) + " table has negative volumes");
}

RegionalVolumeTable select_subjects(const RegionalVolumeTable& table,
                                    std::span<const std::string> ids) {
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < table.subject_ids.size(); ++i)
    row_of[table.subject_ids[i]] = static_cast<Eigen::Index>(i);
  RegionalVolumeTable out;
  out.tissue = table.tissue;
  out.region_names = table.region_names;
  out.values.resize(static_cast<Eigen::Index>(ids.size()), table.values.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = row_of.find(ids[i]);
    if (it == row_of.end()) throw DataError("subject " + ids[i] + " missing from region table");
    out.values.row(static_cast<Eigen::Index>(i)) = table.values.row(it->second);
    out.subject_ids.push_back(ids[i]);
  }
  return out;
}

std::vector<double> aggregate_regional_volumes(std::span<const double> voxels,
                                               std::span<const int> labels,
                                               std::span<const int> region_ids) {
  if (voxels.size() != labels.size())
    throw DataError("aggregate_regional_volumes: label vector length differs from voxel vector");
  std::unordered_map<int, std::size_t> slot;
  for (std::size_t r = 0; r < region_ids.size(); ++r) slot[region_ids[r]] = r;
  std::vector<double> out(region_ids.size(), 0.0);
  std::vector<int> unknown;
  for (std::size_t v = 0; v < voxels.size(); ++v) {
    const auto it = slot.find(labels[v]);
    if (it == slot.end()) {
      if (std::find(unknown.begin(), unknown.end(), labels[v]) == unknown.end())
        unknown.push_back(labels[v]);
      continue;
    }
    out[it->second] += voxels[v];
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    std::string list;
    for (int id : unknown) list += (list.empty() ? "" : ", ") + std::to_string(id);
    throw DataError("aggregate_regional_volumes: unknown label ids: " + list);
  }
  return out;
}

AssociationMatrix build_association_matrix(const RegionalVolumeTable& gm,
                                           const RegionalVolumeTable& wm) {
  if (gm.subject_ids != wm.subject_ids)
    throw DataError("build_association_matrix: GM and WM tables list different subjects");
  if (gm.values.rows() < 3) throw DataError("build_association_matrix: need at least 3 subjects");
  validate(gm);
  validate(wm);

  const auto standardize = [](const RegionalVolumeTable& t) {
    Eigen::MatrixXd z = t.values.rowwise() - t.values.colwise().mean();
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double norm = z.col(c).norm();
      if (!(norm > 0.0))
        throw DataError("build_association_matrix: zero-variance " + tissue_name(t.tissue) +
                        " region " + t.region_names[static_cast<std::size_t>(c)]);
      z.col(c) /= norm;
    }
    return z;
  };
  const Eigen::MatrixXd zg = standardize(gm);
  const Eigen::MatrixXd zw = standardize(wm);
  AssociationMatrix a;
  a.entries = (zg.transpose() * zw).cwiseMax(-1.0).cwiseMin(1.0);
  a.subjects = static_cast<std::size_t>(gm.values.rows());
  return a;
}

std::size_t default_k(std::size_t regions) {
  auto k = static_cast<std::size_t>(std::sqrt(static_cast<double>(regions)));
  while ((k + 1) * (k + 1) <= regions) ++k;
  while (k * k > regions) --k;
  return std::max<std::size_t>(k, 1);
}

namespace {

// Indices of the k largest keys; ties resolved toward the lower index.
template <typename Key>
std::vector<std::size_t> top_k(std::size_t n, std::size_t k, Key key) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  idx.resize(k);
  return idx;
}

}  // namespace

MutualAdjacency mknn_threshold(const Eigen::MatrixXd& association, std::size_t k, RankBy rank_by) {
  const auto r = static_cast<std::size_t>(association.rows());
  if (association.cols() != association.rows() || r < 1)
    throw DataError("mknn_threshold: association matrix must be square and non-empty");
  if (k < 1 || k > r)
    throw DataError("mknn_threshold: K=" + std::to_string(k) + " outside [1, " + std::to_string(r) + "]");
  const auto value = [&](std::size_t i, std::size_t j) {
    const double v = association(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return rank_by == RankBy::magnitude ? std::fabs(v) : v;
  };

  MutualAdjacency adj;
  adj.regions = r;
  adj.k = k;
  const auto n = static_cast<Eigen::Index>(r);
  adj.row_top.setConstant(n, n, false);
  adj.col_top.setConstant(n, n, false);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j : top_k(r, k, [&](std::size_t c) { return value(i, c); }))
      adj.row_top(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = true;
  }
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i : top_k(r, k, [&](std::size_t row) { return value(row, j); }))
      adj.col_top(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = true;
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      if (adj.mutual(i, j)) adj.mutual_pairs.emplace_back(i, j);
    }
  }
  return adj;
}

RegionGraph collapse_region_graph(const MutualAdjacency& adjacency) {
  RegionGraph out{Graph(adjacency.regions), {}};
  for (const auto& [i, j] : adjacency.mutual_pairs) {
    if (i != j) out.graph.add_edge(i, j);
  }
  for (std::size_t v = 0; v < adjacency.regions; ++v) {
    if (out.graph.degree(v) == 0) out.isolated.push_back(v);
  }
  return out;
}

Graph bipartite_graph(const MutualAdjacency& adjacency, bool include_self_pairs) {
  Graph g(2 * adjacency.regions);
  for (const auto& [i, j] : adjacency.mutual_pairs) {
    if (i == j && !include_self_pairs) continue;
    g.add_edge(i, adjacency.regions + j);
  }
  return g;
}

// ---- files ------------------------------------------------------------------

std::vector<AtlasRegion> read_atlas_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::vector<std::string> expected{"region_id", "region_name", "hemisphere"};
  if (table.header != expected)
    throw DataError(path.string() + ": atlas header must be region_id,region_name,hemisphere");
  std::vector<AtlasRegion> atlas;
  for (const auto& row : table.rows)
    atlas.push_back({static_cast<int>(csv::parse_int(row[0], path.string())), row[1], row[2]});
  return atlas;
}

void write_atlas_csv(const std::filesystem::path& path, std::span<const AtlasRegion> atlas) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "region_id,region_name,hemisphere\n";
  for (const auto& r : atlas) out << r.id << ',' << r.name << ',' << r.hemisphere << '\n';
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(static_cast<int>(csv::parse_int(line, path.string())));
  }
  return labels;
}

void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
}

RegionalVolumeTable read_region_table_csv(const std::filesystem::path& path, Tissue tissue) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.header[0] != "subject_id")
    throw DataError(path.string() + ": region table must start with subject_id");
  RegionalVolumeTable t;
  t.tissue = tissue;
  t.region_names.assign(table.header.begin() + 1, table.header.end());
  t.values.resize(static_cast<Eigen::Index>(table.rows.size()),
                  static_cast<Eigen::Index>(t.region_names.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    t.subject_ids.push_back(table.rows[r][0]);
    for (std::size_t c = 0; c < t.region_names.size(); ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          csv::parse_double(table.rows[r][c + 1], path.string());
  }
  validate(t);
  return t;
}

void write_region_table_csv(const std::filesystem::path& path, const RegionalVolumeTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subject_id";
  for (const auto& n : table.region_names) out << ',' << n;
  out << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    out << table.subject_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) out << ',' << csv::format(table.values(r, c));
    out << '\n';
  }
}

void write_edge_list_csv(const std::filesystem::path& path, const MutualAdjacency& adjacency,
                         const AssociationMatrix& association,
                         std::span<const std::string> region_names, bool include_self_pairs) {
  if (region_names.size() != adjacency.regions) throw DataError("edge list: region names mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "gm_region,wm_region,weight,mutual\n";
  for (std::size_t i = 0; i < adjacency.regions; ++i) {
    for (std::size_t j = 0; j < adjacency.regions; ++j) {
      const auto ei = static_cast<Eigen::Index>(i);
      const auto ej = static_cast<Eigen::Index>(j);
      if (!adjacency.row_top(ei, ej) && !adjacency.col_top(ei, ej)) continue;
      if (i == j && !include_self_pairs) continue;
      out << region_names[i] << ',' << region_names[j] << ','
          << csv::format(association.entries(ei, ej)) << ',' << (adjacency.mutual(i, j) ? 1 : 0)
          << '\n';
    }
  }
}

void write_region_graph_csv(const std::filesystem::path& path, const Graph& graph,
                            std::span<const std::string> region_names) {
  if (region_names.size() != graph.node_count()) throw DataError("region graph: names mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "region_i,region_j\n";
  for (const auto& [i, j] : graph.edges()) out << region_names[i] << ',' << region_names[j] << '\n';
}

Graph read_region_graph_csv(const std::filesystem::path& path,
                            std::span<const std::string> region_names) {
  const auto table = csv::read(path);
  const std::vector<std::string> expected{"region_i", "region_j"};
  if (table.header != expected) throw DataError(path.string() + ": expected region_i,region_j");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < region_names.size(); ++i) index[region_names[i]] = i;
  Graph g(region_names.size());
  for (const auto& row : table.rows) {
    const auto a = index.find(row[0]);
    const auto b = index.find(row[1]);
    if (a == index.end() || b == index.end())
      throw DataError(path.string() + ": unknown region in edge " + row[0] + "," + row[1]);
    g.add_edge(a->second, b->second);
  }
  return g;
}

void write_node_table_csv(const std::filesystem::path& path, const RegionGraph& graph,
                          std::span<const std::string> region_names) {
  if (region_names.size() != graph.graph.node_count()) throw DataError("node table: names mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "region,name,degree,isolated\n";
  for (std::size_t v = 0; v < graph.graph.node_count(); ++v) {
    out << v + 1 << ',' << region_names[v] << ',' << graph.graph.degree(v) << ','
        << (graph.graph.degree(v) == 0 ? 1 : 0) << '\n';
  }
}

}  // namespace neurofuse::netbuild
