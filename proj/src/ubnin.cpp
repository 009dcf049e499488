#include "neurofuse/ubnin.hpp"

#include <cmath>
#include <fstream>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"

namespace neurofuse::ubnin {

Eigen::MatrixXd eqn1_weight_matrix(std::span<const double> rgmv, std::span<const double> rwmv) {
  if (rgmv.size() != rwmv.size()) throw DataError("eqn1_weight_matrix: GM and WM vectors differ in length");
  const auto r = static_cast<Eigen::Index>(rgmv.size());
  for (std::size_t i = 0; i < rgmv.size(); ++i) {
    if (!std::isfinite(rgmv[i]) || !std::isfinite(rwmv[i]))
      throw DataError("eqn1_weight_matrix: non-finite volume at region " + std::to_string(i + 1));
  }
  Eigen::MatrixXd w(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      const double d = rgmv[static_cast<std::size_t>(i)] - rwmv[static_cast<std::size_t>(j)];
      w(i, j) = 1.0 / (d * d + 1.0);
    }
  }
  return w;
}

netbuild::RegionGraph binarize_individual(const Eigen::MatrixXd& weights, std::size_t k) {
  return netbuild::collapse_region_graph(netbuild::mknn_threshold(weights, k));
}

std::size_t bit_width(std::size_t regions) { return regions < 2 ? 0 : regions * (regions - 1) / 2; }

BigInt encode_ubnin(const Graph& g) {
  BigInt code = 0;
  const std::size_t n = g.node_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      code <<= 1;
      if (g.has_edge(i, j)) code |= 1;
    }
  }
  return code;
}

Graph decode_ubnin(const BigInt& code, std::size_t regions) {
  const std::size_t width = bit_width(regions);
  if (code < 0 || (code != 0 && msb(code) >= width))
    throw DataError("UBNIN code does not fit in " + std::to_string(width) + " bits");
  Graph g(regions);
  std::size_t bit = width;
  for (std::size_t i = 0; i < regions; ++i) {
    for (std::size_t j = i + 1; j < regions; ++j) {
      --bit;
      if (bit_test(code, static_cast<unsigned>(bit))) g.add_edge(i, j);
    }
  }
  return g;
}

std::vector<UbninCode> cohort_codes(const netbuild::RegionalVolumeTable& gm,
                                    const netbuild::RegionalVolumeTable& wm, std::size_t k,
                                    std::span<const std::string> subtypes) {
  if (gm.subject_ids != wm.subject_ids) throw DataError("UBNIN: GM and WM tables list different subjects");
  if (gm.regions() != wm.regions()) throw DataError("UBNIN: GM and WM tables differ in region count");
  if (!subtypes.empty() && subtypes.size() != gm.subject_ids.size())
    throw DataError("UBNIN: subtype labels do not match the subject count");
  std::vector<UbninCode> out;
  for (Eigen::Index s = 0; s < gm.values.rows(); ++s) {
    const Eigen::VectorXd g = gm.values.row(s).transpose();
    const Eigen::VectorXd w = wm.values.row(s).transpose();
    const auto weights = eqn1_weight_matrix(std::span(g.data(), static_cast<std::size_t>(g.size())),
                                            std::span(w.data(), static_cast<std::size_t>(w.size())));
    const auto idx = static_cast<std::size_t>(s);
    out.push_back({gm.subject_ids[idx], subtypes.empty() ? "" : subtypes[idx],
                   encode_ubnin(binarize_individual(weights, k).graph), bit_width(gm.regions()), k});
  }
  return out;
}

void write_ubnin_csv(const std::filesystem::path& path, std::span<const UbninCode> codes) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subject_id,subtype,code_decimal,bit_width,k\n";
  for (const auto& c : codes)
    out << c.subject_id << ',' << c.subtype << ',' << c.code.str() << ',' << c.bit_width << ',' << c.k << '\n';
}

std::vector<UbninCode> read_ubnin_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::vector<std::string> expected{"subject_id", "subtype", "code_decimal", "bit_width", "k"};
  if (table.header != expected)
    throw DataError(path.string() + ": expected subject_id,subtype,code_decimal,bit_width,k");
  std::vector<UbninCode> out;
  for (const auto& row : table.rows) {
    UbninCode c;
    c.subject_id = row[0];
    c.subtype = row[1];
    if (row[2].empty() || row[2].find_first_not_of("0123456789") != std::string::npos)
      throw DataError(path.string() + ": invalid code for " + row[0]);
    c.code = BigInt(row[2]);
    c.bit_width = static_cast<std::size_t>(csv::parse_int(row[3], path.string()));
    c.k = static_cast<std::size_t>(csv::parse_int(row[4], path.string()));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace neurofuse::ubnin
