#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "neurofuse/csv.hpp"
#include "neurofuse/netbuild.hpp"
#include "neurofuse/subtype.hpp"
#include "neurofuse/ubnin.hpp"

#include <json.hpp>

namespace fs = std::filesystem;
using namespace neurofuse;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "neurofuse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("neurofuse_cli_" + name);
  fs::remove_all(p);
  return p;
}

const std::vector<std::string> kSmall{"--n-hc", "24", "--n-pd", "60", "--gm-voxels", "480", "--wm-voxels",
                                      "480", "--regions", "9"};

fs::path make_dataset(const fs::path& root, const std::string& seed = "3") {
  std::vector<std::string> args{"synth", "--out", (root / "data").string(), "--seed", seed};
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  REQUIRE(invoke(args).code == 0);
  return root / "data";
}

}  // namespace

TEST_CASE("synth creates the output directory and is reproducible") {
  const auto root = scratch("synth");
  const auto data = make_dataset(root);
  for (const char* f : {"clinical.csv", "voxels.nfvx", "voxels.nfvx.ids", "gm_regions.csv", "wm_regions.csv",
                        "atlas.csv", "gm_labels.txt", "wm_labels.txt", "ground_truth.json", "run_config.txt"})
    CHECK_MESSAGE(fs::exists(data / f), f);
  const auto first = snapshot(data);
  fs::remove_all(data);
  make_dataset(root);
  CHECK(snapshot(data) == first);
  fs::remove_all(root);
}

TEST_CASE("pipeline stages run end to end and rerun identically") {
  const auto root = scratch("pipeline");
  const auto data = make_dataset(root);
  const auto run = (root / "run").string();
  const std::vector<std::vector<std::string>> stages{
      {"fuse", "--data", data.string(), "--run", run, "--components", "6"},
      {"subtype", "--data", data.string(), "--run", run},
      {"network", "--data", data.string(), "--run", run, "--n-null", "10"},
      {"ubnin", "--data", data.string(), "--run", run},
      {"report", "--run", run},
  };
  for (const auto& s : stages) {
    const auto o = invoke(s);
    CHECK_MESSAGE(o.code == 0, s[0] << ": " << o.err);
  }
  const auto first = snapshot(root / "run");
  CHECK(first.count("fuse/loadings.csv"));
  CHECK(first.count("subtype/subtypes.csv"));
  CHECK(first.count("network/HC/metrics.json"));
  CHECK(first.count("ubnin/ubnin.csv"));
  CHECK(first.count("report/network_summary.csv"));
  CHECK(slurp(root / "run" / "report" / "warnings.txt").empty());

  fs::remove_all(root / "run");
  for (const auto& s : stages) REQUIRE(invoke(s).code == 0);
  CHECK(snapshot(root / "run") == first);

  SUBCASE("subtype provenance names the selecting components") {
    const auto a = subtype::read_subtype_csv(root / "run" / "subtype" / "subtypes.csv");
    for (const auto& p : a.patients) {
      if (p.label == subtype::Label::Unassigned) CHECK(p.selected_by.empty());
      else CHECK(p.selected_by.rfind("comp_", 0) == 0);
      if (p.label == subtype::Label::AB) CHECK(p.selected_by.find('+') != std::string::npos);
    }
  }
  SUBCASE("density and average degree follow from the edge count") {
    nlohmann::json j;
    std::ifstream(root / "run" / "network" / "HC" / "metrics.json") >> j;
    const auto table = csv::read(root / "run" / "network" / "HC" / "region_graph.csv");
    const double e = static_cast<double>(table.rows.size());
    const double n = j["nodes"].get<double>();
    CHECK(j["edges"].get<double>() == e);
    CHECK(j["scalars"]["density"].get<double>() == doctest::Approx(2 * e / (n * (n - 1))).epsilon(1e-12));
    CHECK(j["scalars"]["average_degree"].get<double>() == doctest::Approx(2 * e / n).epsilon(1e-12));
  }
  SUBCASE("ubnin reports the bit width") {
    const auto codes = ubnin::read_ubnin_csv(root / "run" / "ubnin" / "ubnin.csv");
    REQUIRE(codes.size() == 84);
    for (const auto& c : codes) CHECK(c.bit_width == 36);
  }
  SUBCASE("config file reproduces a stage") {
    const auto cfg = (root / "run" / "fuse" / "run_config.txt").string();
    const auto again = (root / "again").string();
    REQUIRE(invoke({"fuse", "--config", cfg, "--run", again}).code == 0);
    CHECK(slurp(root / "again" / "fuse" / "loadings.csv") == first.at("fuse/loadings.csv"));
  }
  SUBCASE("K override is honoured") {
    const auto kdir = (root / "k2").string();
    REQUIRE(invoke({"network", "--data", data.string(), "--run", kdir, "--k", "2", "--subtype", "HC",
                    "--n-null", "5"}).code == 0);
    const auto gm = netbuild::read_region_table_csv(data / "gm_regions.csv", netbuild::Tissue::GM);
    const auto wm = netbuild::read_region_table_csv(data / "wm_regions.csv", netbuild::Tissue::WM);
    std::vector<std::string> hc;
    for (const auto& id : gm.subject_ids)
      if (id.rfind("HC", 0) == 0) hc.push_back(id);
    const auto assoc = netbuild::build_association_matrix(netbuild::select_subjects(gm, hc),
                                                          netbuild::select_subjects(wm, hc));
    const auto expected = netbuild::collapse_region_graph(netbuild::mknn_threshold(assoc.entries, 2)).graph;
    const auto got = netbuild::read_region_graph_csv(root / "k2" / "network" / "HC" / "region_graph.csv",
                                                     gm.region_names);
    CHECK(got == expected);
  }
  SUBCASE("permtest on identical files gives p = 1 and is seed-reproducible") {
    const auto m = (root / "run" / "network" / "HC" / "metrics.json").string();
    const auto p1 = (root / "p1").string();
    const auto p2 = (root / "p2").string();
    REQUIRE(invoke({"permtest", "--a", m, "--b", m, "--out", p1, "--n-perm", "500", "--seed", "9"}).code == 0);
    REQUIRE(invoke({"permtest", "--a", m, "--b", m, "--out", p2, "--n-perm", "500", "--seed", "9"}).code == 0);
    const auto t = csv::read(fs::path(p1) / "permtest.csv");
    CHECK(csv::parse_double(t.rows.at(0).at(t.column("p_value")), "p") == doctest::Approx(1.0));
    CHECK(slurp(fs::path(p1) / "permtest.csv") == slurp(fs::path(p2) / "permtest.csv"));
  }
  SUBCASE("metrics stage on an exported region graph") {
    const auto out = (root / "m").string();
    REQUIRE(invoke({"metrics", "--graph", (root / "run" / "network" / "HC" / "region_graph.csv").string(),
                    "--atlas", (data / "atlas.csv").string(), "--out", out, "--n-null", "10"}).code == 0);
    CHECK(slurp(fs::path(out) / "metrics.json") == first.at("network/HC/metrics.json"));
  }
  fs::remove_all(root);
}

TEST_CASE("subtype refuses an empty significant set") {
  const auto root = scratch("nosig");
  const auto data = make_dataset(root);
  const auto run = (root / "run").string();
  REQUIRE(invoke({"fuse", "--data", data.string(), "--run", run, "--components", "4"}).code == 0);
  const auto ranking = root / "run" / "fuse" / "ranking.csv";
  auto r = subtype::read_ranking_csv(ranking);
  for (auto& c : r.components) c.rank = 0, c.significant = false;
  r.order.clear();
  subtype::write_ranking_csv(ranking, r);
  const auto o = invoke({"subtype", "--data", data.string(), "--run", run});
  CHECK(o.code == 3);
  CHECK(o.err.find("no significant components") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("network refuses groups with fewer than three subjects") {
  const auto root = scratch("small_group");
  const auto data = make_dataset(root);
  fs::create_directories(root / "run" / "subtype");
  {
    std::ofstream out(root / "run" / "subtype" / "subtypes.csv");
    out << "subject_id,label,selected_by\nPD01,AB,comp_1+comp_2\nPD02,AB,comp_1+comp_2\nPD03,A,comp_1\n";
  }
  const auto o = invoke({"network", "--data", data.string(), "--run", (root / "run").string(), "--subtype", "AB"});
  CHECK(o.code == 3);
  CHECK(o.err.find("at least 3") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("exit codes for usage and data errors") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"fuse", "--no-such-option"}).code == 2);
  CHECK(invoke({"fuse", "--data", "x", "--run", "y", "--fdr-q", "1.5"}).code == 2);
  CHECK(invoke({"network", "--data", "x", "--run", "y", "--hub-mode", "sometimes"}).code == 2);
  CHECK(invoke({"fuse", "--run", "y"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);

  const auto root = scratch("errors");
  const auto data = make_dataset(root);
  const auto bytes = slurp(data / "voxels.nfvx");
  std::ofstream(data / "voxels.nfvx", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto o = invoke({"fuse", "--data", data.string(), "--run", (root / "run").string()});
  CHECK(o.code == 3);
  CHECK(o.err.find("truncated") != std::string::npos);
  CHECK(invoke({"synth", "--out", (root / "d2").string(), "--n-sources", "500"}).code == 3);
  fs::remove_all(root);
}

TEST_CASE("report on a partial run lists warnings") {
  const auto root = scratch("report");
  const auto data = make_dataset(root);
  const auto run = (root / "run").string();
  REQUIRE(invoke({"fuse", "--data", data.string(), "--run", run, "--components", "4"}).code == 0);
  const auto o = invoke({"report", "--run", run});
  CHECK(o.code == 0);
  const auto warnings = slurp(root / "run" / "report" / "warnings.txt");
  CHECK(warnings.find("stage subtype missing") != std::string::npos);
  CHECK(warnings.find("stage network missing") != std::string::npos);
  const auto violin = csv::read(root / "run" / "report" / "loadings_violin.csv");
  CHECK(violin.header == std::vector<std::string>{"component", "rank", "subject_id", "group", "loading"});
  const auto artifacts = csv::read(root / "run" / "report" / "artifacts.csv");
  CHECK(artifacts.header == std::vector<std::string>{"stage", "file", "bytes"});
  CHECK(!artifacts.rows.empty());
  fs::remove_all(root);
}
