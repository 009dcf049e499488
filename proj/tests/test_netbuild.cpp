#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "neurofuse/error.hpp"
#include "neurofuse/graph.hpp"
#include "neurofuse/netbuild.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/stats.hpp"

using namespace neurofuse;
using namespace neurofuse::netbuild;

namespace {

Eigen::MatrixXd random_assoc(Rng& rng, int r, bool quantized) {
  Eigen::MatrixXd a(r, r);
  for (int i = 0; i < a.size(); ++i) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    a.data()[i] = quantized ? std::round(u * 4.0) / 4.0 : u;
  }
  return a;
}

// j is in the top-K of row i iff fewer than K entries beat it (larger, or equal at a lower index).
std::set<Edge> brute_force_mutual(const Eigen::MatrixXd& a, std::size_t k) {
  const auto r = static_cast<std::size_t>(a.rows());
  std::set<Edge> out;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      std::size_t row_beat = 0, col_beat = 0;
      for (std::size_t c = 0; c < r; ++c) {
        if (a(i, c) > a(i, j) || (a(i, c) == a(i, j) && c < j)) ++row_beat;
        if (a(c, j) > a(i, j) || (a(c, j) == a(i, j) && c < i)) ++col_beat;
      }
      if (row_beat < k && col_beat < k) out.emplace(i, j);
    }
  }
  return out;
}

RegionalVolumeTable table(const Eigen::MatrixXd& v, Tissue t) {
  RegionalVolumeTable out;
  out.values = v;
  out.tissue = t;
  for (Eigen::Index c = 0; c < v.cols(); ++c) out.region_names.push_back("r" + std::to_string(c + 1));
  for (Eigen::Index r = 0; r < v.rows(); ++r) out.subject_ids.push_back("s" + std::to_string(r + 1));
  return out;
}

Eigen::MatrixXd positive_uniform(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = 1.0 + uniform01(rng);
  return m;
}

}  // namespace

TEST_SUITE("graph") {
TEST_CASE("Graph basics") {
  Graph g(4);
  CHECK(g.add_edge(2, 0));
  CHECK_FALSE(g.add_edge(0, 2));
  CHECK(g.add_edge(1, 3));
  CHECK(g.edge_count() == 2);
  CHECK(g.has_edge(0, 2));
  CHECK(g.edges() == std::vector<Edge>{{0, 2}, {1, 3}});
  CHECK_THROWS_AS(g.add_edge(1, 1), DataError);
  CHECK_THROWS_AS(g.add_edge(1, 9), DataError);
  CHECK(g.remove_edge(0, 2));
  CHECK_FALSE(g.remove_edge(0, 2));
  CHECK(g.edge_count() == 1);

  const std::vector<std::size_t> perm{3, 2, 1, 0};
  const Graph h = g.relabeled(perm);
  CHECK(h.has_edge(2, 0));
  CHECK(h.relabeled(perm) == g);
}
}

TEST_SUITE("netbuild") {
TEST_CASE("aggregate_regional_volumes") {
  const std::vector<double> v{2, 3, 5};
  const std::vector<int> labels{1, 1, 2};
  const std::vector<int> ids{1, 2};
  CHECK(aggregate_regional_volumes(v, labels, ids) == std::vector<double>{5, 5});

  const std::vector<double> zero(3, 0.0);
  CHECK(aggregate_regional_volumes(zero, labels, ids) == std::vector<double>{0, 0});

  const std::vector<int> bad{1, 7, 9};
  try {
    aggregate_regional_volumes(v, bad, ids);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("7, 9") != std::string::npos);
  }
  const std::vector<int> short_labels{1};
  CHECK_THROWS_AS(aggregate_regional_volumes(v, short_labels, ids), DataError);

  Rng rng = make_rng(11, 1);
  std::vector<double> vox(500);
  std::vector<int> lab(500);
  for (std::size_t i = 0; i < vox.size(); ++i) {
    vox[i] = uniform01(rng);
    lab[i] = 10 + static_cast<int>(uniform_index(rng, 6));
  }
  const std::vector<int> rid{15, 14, 13, 12, 11, 10};
  const auto sums = aggregate_regional_volumes(vox, lab, rid);
  for (std::size_t r = 0; r < rid.size(); ++r) {
    double s = 0;
    for (std::size_t i = 0; i < vox.size(); ++i)
      if (lab[i] == rid[r]) s += vox[i];
    CHECK(sums[r] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("build_association_matrix") {
  Rng rng = make_rng(12, 1);
  const Eigen::MatrixXd g = positive_uniform(rng, 5, 3);
  const Eigen::MatrixXd w = positive_uniform(rng, 5, 3);
  const auto a = build_association_matrix(table(g, Tissue::GM), table(w, Tissue::WM));
  CHECK(a.subjects == 5);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::vector<double> x(g.col(i).data(), g.col(i).data() + 5);
      std::vector<double> y(w.col(j).data(), w.col(j).data() + 5);
      CHECK(std::fabs(a.entries(i, j) - stats::pearson_r(x, y)) < 1e-12);
    }
  }

  const auto self = build_association_matrix(table(g, Tissue::GM), table(g, Tissue::WM));
  for (int i = 0; i < 3; ++i) CHECK(self.entries(i, i) == doctest::Approx(1.0).epsilon(1e-14));

  // Positive rescaling of the GM volumes leaves Pearson unchanged.
  const auto scaled = build_association_matrix(table(g * 3.5, Tissue::GM), table(w, Tissue::WM));
  CHECK((scaled.entries - a.entries).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(build_association_matrix(table(g.topRows(2), Tissue::GM),
                                           table(w.topRows(2), Tissue::WM)),
                  DataError);
  Eigen::MatrixXd flat = g;
  flat.col(1).setConstant(2.0);
  try {
    build_association_matrix(table(flat, Tissue::GM), table(w, Tissue::WM));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("GM region r2") != std::string::npos);
  }
}

TEST_CASE("default_k") {
  CHECK(default_k(56) == 7);
  CHECK(default_k(49) == 7);
  CHECK(default_k(48) == 6);
  CHECK(default_k(2) == 1);
  CHECK(default_k(1) == 1);
}

TEST_CASE("mknn_threshold worked example") {
  Eigen::MatrixXd a(3, 3);
  a << .9, .1, .2, .3, .8, .4, .5, .6, .7;
  const auto adj = mknn_threshold(a, 1);
  CHECK(adj.mutual_pairs == std::vector<Edge>{{0, 0}, {1, 1}, {2, 2}});
  const auto rg = collapse_region_graph(adj);
  CHECK(rg.graph.edge_count() == 0);
  CHECK(rg.isolated.size() == 3);
  CHECK_THROWS_AS(mknn_threshold(a, 0), DataError);
  CHECK_THROWS_AS(mknn_threshold(a, 4), DataError);
}

TEST_CASE("mknn_threshold drops one-directional links") {
  // Regions A, B, Z: A-B and A-Z are mutual, B selects Z but Z does not select B.
  Eigen::MatrixXd a(3, 3);
  a << 0.0, 0.9, 0.8,
       0.9, 0.0, 0.7,
       0.8, 0.1, 0.75;
  const auto adj = mknn_threshold(a, 2);
  CHECK(adj.row_top(1, 2));
  CHECK_FALSE(adj.col_top(1, 2));
  const auto rg = collapse_region_graph(adj);
  CHECK(rg.graph.edges() == std::vector<Edge>{{0, 1}, {0, 2}});
  CHECK_FALSE(rg.graph.has_edge(1, 2));
}

TEST_CASE("mknn_threshold saturates at K = R") {
  Rng rng = make_rng(13, 1);
  const auto a = random_assoc(rng, 6, false);
  const auto adj = mknn_threshold(a, 6);
  CHECK(adj.mutual_pairs.size() == 36);
  CHECK(collapse_region_graph(adj).graph.edge_count() == 15);
}

TEST_CASE("collapse_region_graph") {
  MutualAdjacency adj;
  adj.regions = 3;
  adj.mutual_pairs = {{0, 0}, {0, 1}, {1, 0}};
  const auto rg = collapse_region_graph(adj);
  CHECK(rg.graph.edges() == std::vector<Edge>{{0, 1}});
  CHECK(rg.isolated == std::vector<std::size_t>{2});

  adj.mutual_pairs.clear();
  CHECK(collapse_region_graph(adj).isolated.size() == 3);
}

TEST_CASE("mknn_threshold matches brute force with monotonicity and degree cap") {
  Rng rng = make_rng(14, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int r = 2 + static_cast<int>(uniform_index(rng, 9));
    const auto a = random_assoc(rng, r, trial % 3 == 0);
    std::set<Edge> previous;
    for (int k = 1; k <= r; ++k) {
      const auto adj = mknn_threshold(a, static_cast<std::size_t>(k));
      const std::set<Edge> got(adj.mutual_pairs.begin(), adj.mutual_pairs.end());
      CHECK(got == brute_force_mutual(a, static_cast<std::size_t>(k)));
      CHECK(std::includes(got.begin(), got.end(), previous.begin(), previous.end()));
      const Graph bip = bipartite_graph(adj);
      for (std::size_t v = 0; v < bip.node_count(); ++v) CHECK(bip.degree(v) <= static_cast<std::size_t>(k));
      previous = got;
    }
  }
}

TEST_CASE("mknn_threshold is permutation equivariant") {
  Rng rng = make_rng(15, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 10;
    const auto a = random_assoc(rng, r, false);
    std::vector<std::size_t> perm(r);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = r - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
    Eigen::MatrixXd b(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) b(perm[i], perm[j]) = a(i, j);
    const auto ga = collapse_region_graph(mknn_threshold(a, 3)).graph;
    const auto gb = collapse_region_graph(mknn_threshold(b, 3)).graph;
    CHECK(ga.relabeled(perm) == gb);
  }
}

TEST_CASE("mknn_threshold magnitude ranking") {
  Eigen::MatrixXd a(2, 2);
  a << -0.9, 0.1, 0.2, 0.3;
  CHECK(mknn_threshold(a, 1).mutual_pairs == std::vector<Edge>{{1, 1}});
  CHECK(mknn_threshold(a, 1, RankBy::magnitude).mutual_pairs == std::vector<Edge>{{0, 0}, {1, 1}});
}

TEST_CASE("region files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "neurofuse_netbuild_test";
  std::filesystem::create_directories(dir);
  Rng rng = make_rng(16, 1);
  auto t = table(positive_uniform(rng, 4, 3), Tissue::WM);
  write_region_table_csv(dir / "wm.csv", t);
  const auto back = read_region_table_csv(dir / "wm.csv", Tissue::WM);
  CHECK(back.values == t.values);
  CHECK(back.subject_ids == t.subject_ids);
  CHECK(back.region_names == t.region_names);

  Graph g(3);
  g.add_edge(0, 2);
  write_region_graph_csv(dir / "g.csv", g, t.region_names);
  CHECK(read_region_graph_csv(dir / "g.csv", t.region_names) == g);

  const std::vector<AtlasRegion> atlas{{1, "frontal_L", "L"}, {2, "frontal_R", "R"}};
  write_atlas_csv(dir / "atlas.csv", atlas);
  const auto atlas_back = read_atlas_csv(dir / "atlas.csv");
  REQUIRE(atlas_back.size() == 2);
  CHECK(atlas_back[1].name == "frontal_R");
  CHECK(atlas_back[1].hemisphere == "R");

  t.values(0, 0) = -1;
  write_region_table_csv(dir / "neg.csv", t);
  CHECK_THROWS_AS(read_region_table_csv(dir / "neg.csv", Tissue::WM), DataError);
  std::filesystem::remove_all(dir);
}
}
