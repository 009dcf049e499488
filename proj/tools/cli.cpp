#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"
#include "neurofuse/ingest.hpp"
#include "neurofuse/jica.hpp"
#include "neurofuse/netbuild.hpp"
#include "neurofuse/netmetrics.hpp"
#include "neurofuse/subtype.hpp"
#include "neurofuse/synth.hpp"
#include "neurofuse/ubnin.hpp"

#ifndef NEUROFUSE_VERSION
#define NEUROFUSE_VERSION "unknown"
#endif

namespace neurofuse::cli {

namespace fs = std::filesystem;

namespace {

const char* const kConfigFile = "run_config.txt";

std::string quoted(const std::string& s) { return '"' + s + '"'; }

void require_path(const fs::path& p, const char* option, const std::string& command) {
  if (p.empty()) throw UsageError(command + " needs --" + option);
}

void write_run_config(const fs::path& dir, const RunConfig& c) {
  fs::create_directories(dir);
  std::ofstream out(dir / kConfigFile);
  if (!out) throw DataError("cannot write " + (dir / kConfigFile).string());
  out << serialize(c);
}

void write_text(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::map<std::string, std::string> read_run_config(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    std::string value = line.substr(eq + 3);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out[line.substr(0, eq)] = value;
  }
  return out;
}

fs::path stage_dir(const RunConfig& c, const char* stage) { return c.run / stage; }

std::unordered_map<std::string, const ClinicalRecord*> index_records(const std::vector<ClinicalRecord>& records) {
  std::unordered_map<std::string, const ClinicalRecord*> out;
  for (const auto& r : records) out[r.subject_id] = &r;
  return out;
}

std::size_t resolve_k(const RunConfig& c, std::size_t regions) {
  const std::size_t k = c.k ? c.k : netbuild::default_k(regions);
  if (k > regions)
    throw UsageError("--k " + std::to_string(k) + " exceeds the " + std::to_string(regions) + " regions");
  return k;
}

std::vector<std::string> region_names(const std::vector<netbuild::AtlasRegion>& atlas) {
  std::vector<std::string> out;
  for (const auto& r : atlas) out.push_back(r.name);
  return out;
}

std::vector<std::string> hemispheres(const std::vector<netbuild::AtlasRegion>& atlas) {
  std::vector<std::string> out;
  for (const auto& r : atlas) out.push_back(r.hemisphere);
  return out;
}

struct Dataset {
  netbuild::RegionalVolumeTable gm;
  netbuild::RegionalVolumeTable wm;
  std::vector<netbuild::AtlasRegion> atlas;
};

Dataset read_regions(const fs::path& data) {
  Dataset d;
  d.gm = netbuild::read_region_table_csv(data / "gm_regions.csv", netbuild::Tissue::GM);
  d.wm = netbuild::read_region_table_csv(data / "wm_regions.csv", netbuild::Tissue::WM);
  d.atlas = netbuild::read_atlas_csv(data / "atlas.csv");
  const auto names = region_names(d.atlas);
  if (d.gm.region_names != names || d.wm.region_names != names)
    throw DataError("region tables and atlas.csv list different regions");
  if (d.gm.subject_ids != d.wm.subject_ids)
    throw DataError("gm_regions.csv and wm_regions.csv list different subjects");
  return d;
}

// Metrics JSON and hubs CSV for one region graph.
void write_graph_metrics(const Graph& g, const std::vector<netbuild::AtlasRegion>& atlas,
                         const RunConfig& c, const fs::path& dir) {
  netmetrics::MetricsOptions opt;
  opt.n_null = c.n_null;
  opt.seed = c.seed;
  opt.partition = c.partition == "hemisphere" ? netmetrics::PartitionMode::hemisphere
                                              : netmetrics::PartitionMode::modularity;
  opt.hemispheres = hemispheres(atlas);
  const auto report = netmetrics::compute_metrics(g, opt);
  const auto names = region_names(atlas);
  fs::create_directories(dir);
  netmetrics::write_metrics_json(dir / "metrics.json", report, names);
  const auto hubs = netmetrics::find_hubs(report.degree, report.betweenness,
                                          netmetrics::hub_mode_from_string(c.hub_mode));
  netmetrics::write_hubs_csv(dir / "hubs.csv", hubs, report.degree, report.betweenness, names);
  std::cout << dir.filename().string() << ": " << report.nodes << " nodes, " << report.edges
            << " edges, density " << csv::format(report.density) << ", average degree "
            << csv::format(report.average_degree) << ", " << hubs.hubs.size() << " hubs\n";
  for (const auto& n : report.notices) std::cerr << "notice: " << n << '\n';
}

std::vector<std::string> members_of(const std::string& label, const Dataset& d,
                                    const std::vector<ClinicalRecord>& clinical,
                                    const subtype::SubtypeAssignment* assignment) {
  std::set<std::string> wanted;
  if (label == "HC" || label == "PD") {
    const Group g = label == "HC" ? Group::HC : Group::PD;
    for (const auto& r : clinical)
      if (r.group == g) wanted.insert(r.subject_id);
  } else {
    if (!assignment) throw DataError("network " + label + " needs subtype/subtypes.csv; run `neurofuse subtype` first");
    for (const auto& id : assignment->members(subtype::label_from_string(label))) wanted.insert(id);
  }
  std::vector<std::string> ids;  // region-table order
  for (const auto& id : d.gm.subject_ids)
    if (wanted.count(id)) ids.push_back(id);
  return ids;
}

}  // namespace

void validate(const RunConfig& c) {
  if (c.components < 1) throw UsageError("--components must be at least 1");
  if (c.max_iter < 1) throw UsageError("--max-iter must be at least 1");
  if (!(c.fdr_q > 0.0 && c.fdr_q < 1.0)) throw UsageError("--fdr-q must lie in (0, 1)");
  if (c.n_perm < 1) throw UsageError("--n-perm must be at least 1");
  if (!(c.outlier_sd > 0.0)) throw UsageError("--outlier-sd must be positive");
  if (!(c.noise_sd >= 0.0)) throw UsageError("--noise-sd must be non-negative");
  if (c.hub_mode != "either" && c.hub_mode != "both") throw UsageError("--hub-mode must be either or both");
  if (c.partition != "modularity" && c.partition != "hemisphere")
    throw UsageError("--partition must be modularity or hemisphere");
  if (c.threshold_mean != "pd" && c.threshold_mean != "all")
    throw UsageError("--threshold-mean must be pd or all");
  if (c.method != "permutation" && c.method != "t") throw UsageError("--method must be permutation or t");
  static const std::set<std::string> labels{"all", "HC", "PD", "A", "B", "AB"};
  if (!labels.count(c.subtype)) throw UsageError("--subtype must be one of all, HC, PD, A, B, AB");
}

std::string serialize(const RunConfig& c) {
  std::ostringstream o;
  o << "# neurofuse " << NEUROFUSE_VERSION << '\n';
  o << "command = " << quoted(c.command) << '\n';
  o << "data = " << quoted(c.data.string()) << '\n';
  o << "run = " << quoted(c.run.string()) << '\n';
  o << "out = " << quoted(c.out.string()) << '\n';
  o << "seed = " << c.seed << '\n';
  o << "components = " << c.components << '\n';
  o << "max-iter = " << c.max_iter << '\n';
  o << "k = " << c.k << '\n';
  o << "fdr-q = " << csv::format(c.fdr_q) << '\n';
  o << "n-perm = " << c.n_perm << '\n';
  o << "n-null = " << c.n_null << '\n';
  o << "hub-mode = " << quoted(c.hub_mode) << '\n';
  o << "partition = " << quoted(c.partition) << '\n';
  o << "drop-outliers = " << (c.drop_outliers ? "true" : "false") << '\n';
  o << "outlier-sd = " << csv::format(c.outlier_sd) << '\n';
  o << "rank-abs = " << (c.rank_abs ? "true" : "false") << '\n';
  o << "threshold-mean = " << quoted(c.threshold_mean) << '\n';
  o << "self-pairs = " << (c.self_pairs ? "true" : "false") << '\n';
  o << "subtype = " << quoted(c.subtype) << '\n';
  o << "graph = " << quoted(c.graph.string()) << '\n';
  o << "atlas = " << quoted(c.atlas.string()) << '\n';
  o << "a = " << quoted(c.a.string()) << '\n';
  o << "b = " << quoted(c.b.string()) << '\n';
  o << "metric = " << quoted(c.metric) << '\n';
  o << "method = " << quoted(c.method) << '\n';
  o << "n-hc = " << c.n_hc << '\n';
  o << "n-pd = " << c.n_pd << '\n';
  o << "gm-voxels = " << c.gm_voxels << '\n';
  o << "wm-voxels = " << c.wm_voxels << '\n';
  o << "n-sources = " << c.n_sources << '\n';
  o << "noise-sd = " << csv::format(c.noise_sd) << '\n';
  o << "regions = " << c.regions << '\n';
  return o.str();
}

// ---- stages -----------------------------------------------------------------

void cmd_synth(const RunConfig& c) {
  require_path(c.out, "out", "synth");
  synth::SynthConfig s;
  s.n_hc = c.n_hc;
  s.n_pd = c.n_pd;
  s.gm_voxels = c.gm_voxels;
  s.wm_voxels = c.wm_voxels;
  s.n_sources = c.n_sources;
  s.noise_sd = c.noise_sd;
  s.n_regions = c.regions;
  s.seed = c.seed;
  if (s.effect_sizes.size() > s.n_sources) s.effect_sizes.resize(s.n_sources);
  const auto cohort = synth::generate_cohort(s);
  synth::write_cohort(c.out, cohort);
  write_run_config(c.out, c);
  std::cout << "synth: " << cohort.voxels.rows() << " subjects, " << cohort.voxels.total_voxels()
            << " voxels, " << c.regions << " regions, SNR " << csv::format(cohort.truth.snr) << " -> "
            << c.out.string() << '\n';
}

void cmd_fuse(const RunConfig& c) {
  require_path(c.data, "data", "fuse");
  require_path(c.run, "run", "fuse");
  const auto clinical = read_clinical_csv(c.data / "clinical.csv");
  auto voxels = read_nfvx(c.data / "voxels.nfvx");
  const auto records = index_records(clinical);
  for (const auto& id : voxels.subject_order)
    if (!records.count(id)) throw DataError("subject " + id + " in voxels.nfvx has no clinical record");

  const fs::path dir = stage_dir(c, "fuse");
  fs::create_directories(dir);

  const auto outliers = screen_outliers(voxels, c.outlier_sd);
  {
    std::ofstream out(dir / "outliers.csv");
    out << "subject_id,correlation,threshold,flagged,status\n";
    for (const auto& e : outliers.entries)
      out << e.subject_id << ',' << (e.correlation ? csv::format(*e.correlation) : "") << ','
          << csv::format(e.threshold) << ',' << (e.flagged ? 1 : 0) << ','
          << (e.status == OutlierStatus::ok ? "ok" : "zero_variance") << '\n';
  }
  std::vector<std::string> dropped;
  const auto flagged = outliers.flagged_rows();
  if (c.drop_outliers && !flagged.empty()) {
    for (auto r : flagged) dropped.push_back(voxels.subject_order[r]);
    voxels = drop_rows(voxels, flagged);
  }

  std::vector<double> ages;
  std::vector<Gender> genders;
  std::vector<Group> groups;
  for (const auto& id : voxels.subject_order) {
    const auto* r = records.at(id);
    ages.push_back(r->age);
    genders.push_back(r->gender);
    groups.push_back(r->group);
  }
  const auto residual = regress_covariates(voxels, make_covariate_design(ages, genders));

  jica::InfomaxOptions opt;
  opt.seed = c.seed;
  opt.max_iter = c.max_iter;
  const auto decomp = jica::decompose_joint(residual, c.components, opt);
  if (!decomp.converged)
    std::cerr << "warning: infomax stopped after " << decomp.iterations << " iterations without converging\n";
  jica::write_loadings_csv(dir / "loadings.csv", decomp);
  jica::write_sources_nfvx(dir / "sources.nfvx", decomp);

  const auto ranking = subtype::rank_components(decomp.loadings, groups, c.fdr_q);
  subtype::write_ranking_csv(dir / "ranking.csv", ranking);

  const auto split = jica::split_sources(decomp);
  {
    std::ofstream out(dir / "zmaps.csv");
    out << "component,gm_positive,gm_negative,wm_positive,wm_negative\n";
    for (std::size_t k = 0; k < decomp.components(); ++k) {
      out << "comp_" << k + 1;
      for (const Eigen::MatrixXd* m : {&split.gm, &split.wm}) {
        const Eigen::VectorXd row = m->row(static_cast<Eigen::Index>(k)).transpose();
        const auto z = jica::zmap_threshold(std::span(row.data(), static_cast<std::size_t>(row.size())), 3.5, k);
        out << ',' << std::count(z.mask.begin(), z.mask.end(), 1) << ','
            << std::count(z.mask.begin(), z.mask.end(), -1);
      }
      out << '\n';
    }
  }

  nlohmann::json summary;
  summary["subjects"] = voxels.rows();
  summary["components"] = decomp.components();
  summary["iterations"] = decomp.iterations;
  summary["converged"] = decomp.converged;
  summary["tolerance"] = opt.tol;
  summary["retained_variance"] = decomp.retained_variance;
  summary["dropped_outliers"] = dropped;
  std::vector<std::string> significant;
  for (auto k : ranking.order) significant.push_back("comp_" + std::to_string(k + 1));
  summary["significant_components"] = significant;
  std::ofstream(dir / "fuse_summary.json") << summary.dump(2) << '\n';
  write_run_config(dir, c);

  std::cout << "fuse: " << voxels.rows() << " subjects, C=" << decomp.components() << ", "
            << decomp.iterations << " iterations, converged=" << (decomp.converged ? "true" : "false")
            << ", " << ranking.order.size() << " significant components\n";
}

void cmd_subtype(const RunConfig& c) {
  require_path(c.data, "data", "subtype");
  require_path(c.run, "run", "subtype");
  const auto table = jica::read_loadings_csv(stage_dir(c, "fuse") / "loadings.csv");
  const auto ranking = subtype::read_ranking_csv(stage_dir(c, "fuse") / "ranking.csv");
  if (ranking.order.empty())
    throw DataError("no significant components at q=" + csv::format(c.fdr_q) + "; nothing to subtype");
  const auto clinical = read_clinical_csv(c.data / "clinical.csv");
  const auto records = index_records(clinical);

  std::vector<std::size_t> pd_rows;
  std::vector<std::string> pd_ids;
  for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
    const auto it = records.find(table.subject_ids[i]);
    if (it == records.end()) throw DataError("subject " + table.subject_ids[i] + " has no clinical record");
    if (it->second->group == Group::PD) {
      pd_rows.push_back(i);
      pd_ids.push_back(table.subject_ids[i]);
    }
  }
  if (pd_ids.empty()) throw DataError("no PD patients in the loadings");

  std::vector<std::string> notices;
  const std::size_t used = std::min<std::size_t>(2, ranking.order.size());
  if (used < 2) notices.push_back("only one significant component; subtype B and AB stay empty");
  std::vector<std::size_t> top(ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(used));
  std::vector<std::vector<std::string>> selections(2);
  std::vector<std::string> names(2, "");
  for (std::size_t t = 0; t < used; ++t) {
    const auto col = static_cast<Eigen::Index>(top[t]);
    if (col >= table.loadings.cols()) throw DataError("ranking names a component missing from loadings.csv");
    std::vector<double> pd;
    for (auto r : pd_rows) pd.push_back(table.loadings(static_cast<Eigen::Index>(r), col));
    std::optional<double> anchor;
    if (c.threshold_mean == "all") anchor = table.loadings.col(col).mean();
    for (auto i : subtype::threshold_loadings(pd, anchor)) selections[t].push_back(pd_ids[i]);
    names[t] = "comp_" + std::to_string(top[t] + 1);
  }
  const auto assignment = subtype::assign_subtypes(selections[0], selections[1], pd_ids, names[0], names[1]);
  const auto imputed = impute_clinical(clinical);
  auto correlations = subtype::correlate_loadings_clinical(assignment, table.subject_ids, table.loadings, top, imputed);
  notices.insert(notices.end(), correlations.notices.begin(), correlations.notices.end());

  const fs::path dir = stage_dir(c, "subtype");
  fs::create_directories(dir);
  subtype::write_subtype_csv(dir / "subtypes.csv", assignment);
  subtype::write_correlation_csv(dir / "clinical_correlations.csv", correlations);
  write_text(dir / "notices.txt", notices);
  write_run_config(dir, c);

  std::cout << "subtype: " << names[0] << (used > 1 ? " + " + names[1] : std::string()) << " -> A "
            << assignment.members(subtype::Label::A).size() << ", B "
            << assignment.members(subtype::Label::B).size() << ", AB "
            << assignment.members(subtype::Label::AB).size() << ", unassigned "
            << assignment.members(subtype::Label::Unassigned).size() << '\n';
  for (const auto& n : notices) std::cerr << "notice: " << n << '\n';
}

void cmd_network(const RunConfig& c) {
  require_path(c.data, "data", "network");
  require_path(c.run, "run", "network");
  const auto d = read_regions(c.data);
  const auto clinical = read_clinical_csv(c.data / "clinical.csv");
  const fs::path subtypes = stage_dir(c, "subtype") / "subtypes.csv";
  std::optional<subtype::SubtypeAssignment> assignment;
  if (fs::exists(subtypes)) assignment = subtype::read_subtype_csv(subtypes);

  std::vector<std::string> labels;
  if (c.subtype == "all") {
    labels = {"HC"};
    if (assignment) labels.insert(labels.end(), {"A", "B", "AB"});
    else std::cerr << "warning: no subtype/subtypes.csv; building the HC network only\n";
  } else {
    labels = {c.subtype};
  }
  const std::size_t k = resolve_k(c, d.gm.regions());
  const auto names = region_names(d.atlas);
  const fs::path dir = stage_dir(c, "network");
  for (const auto& label : labels) {
    const auto ids = members_of(label, d, clinical, assignment ? &*assignment : nullptr);
    if (ids.size() < 3) {
      const std::string msg = "subtype " + label + " has " + std::to_string(ids.size()) +
                              " subjects; at least 3 are needed to build a network";
      if (c.subtype != "all") throw DataError(msg);
      std::cerr << "warning: " << msg << "; skipped\n";
      continue;
    }
    const auto assoc = netbuild::build_association_matrix(netbuild::select_subjects(d.gm, ids),
                                                          netbuild::select_subjects(d.wm, ids));
    const auto adj = netbuild::mknn_threshold(assoc.entries, k,
                                              c.rank_abs ? netbuild::RankBy::magnitude : netbuild::RankBy::value);
    const auto region = netbuild::collapse_region_graph(adj);
    const fs::path sub = dir / label;
    fs::create_directories(sub);
    netbuild::write_edge_list_csv(sub / "edges.csv", adj, assoc, names, c.self_pairs);
    netbuild::write_region_graph_csv(sub / "region_graph.csv", region.graph, names);
    netbuild::write_node_table_csv(sub / "nodes.csv", region, names);
    write_graph_metrics(region.graph, d.atlas, c, sub);
  }
  write_run_config(dir, c);
}

void cmd_metrics(const RunConfig& c) {
  require_path(c.graph, "graph", "metrics");
  require_path(c.atlas, "atlas", "metrics");
  require_path(c.out, "out", "metrics");
  const auto atlas = netbuild::read_atlas_csv(c.atlas);
  const auto g = netbuild::read_region_graph_csv(c.graph, region_names(atlas));
  write_graph_metrics(g, atlas, c, c.out);
  write_run_config(c.out, c);
}

void cmd_ubnin(const RunConfig& c) {
  require_path(c.data, "data", "ubnin");
  require_path(c.run, "run", "ubnin");
  const auto d = read_regions(c.data);
  std::unordered_map<std::string, std::string> label_of;
  const fs::path clinical_path = c.data / "clinical.csv";
  if (fs::exists(clinical_path))
    for (const auto& r : read_clinical_csv(clinical_path)) label_of[r.subject_id] = to_string(r.group);
  const fs::path subtypes = stage_dir(c, "subtype") / "subtypes.csv";
  if (fs::exists(subtypes))
    for (const auto& p : subtype::read_subtype_csv(subtypes).patients) label_of[p.subject_id] = subtype::to_string(p.label);
  std::vector<std::string> labels;
  for (const auto& id : d.gm.subject_ids) labels.push_back(label_of.count(id) ? label_of[id] : "");

  const std::size_t k = resolve_k(c, d.gm.regions());
  const auto codes = ubnin::cohort_codes(d.gm, d.wm, k, labels);
  const fs::path dir = stage_dir(c, "ubnin");
  fs::create_directories(dir);
  ubnin::write_ubnin_csv(dir / "ubnin.csv", codes);
  write_run_config(dir, c);
  std::set<ubnin::BigInt> distinct;
  for (const auto& code : codes) distinct.insert(code.code);
  std::cout << "ubnin: " << codes.size() << " subjects, " << distinct.size() << " distinct codes, bit width "
            << ubnin::bit_width(d.gm.regions()) << ", K=" << k << '\n';
}

void cmd_permtest(const RunConfig& c) {
  require_path(c.a, "a", "permtest");
  require_path(c.b, "b", "permtest");
  require_path(c.out, "out", "permtest");
  const auto va = netmetrics::read_nodal_metric(c.a, c.metric);
  const auto vb = netmetrics::read_nodal_metric(c.b, c.metric);
  const auto method = c.method == "t" ? netmetrics::CompareMethod::student_t : netmetrics::CompareMethod::permutation;
  const auto r = netmetrics::compare_networks(va, vb, method, c.n_perm, c.seed);
  fs::create_directories(c.out);
  std::ofstream out(c.out / "permtest.csv");
  if (!out) throw DataError("cannot write " + (c.out / "permtest.csv").string());
  out << "metric,method,statistic,p_value,df,n_a,n_b,n_perm,seed\n"
      << c.metric << ',' << c.method << ',' << csv::format(r.statistic) << ',' << csv::format(r.p_value)
      << ',' << csv::format(r.df) << ',' << va.size() << ',' << vb.size() << ','
      << (method == netmetrics::CompareMethod::permutation ? c.n_perm : 0) << ',' << c.seed << '\n';
  write_run_config(c.out, c);
  std::cout << "permtest: " << c.metric << " t=" << csv::format(r.statistic) << " p=" << csv::format(r.p_value) << '\n';
}

void cmd_report(const RunConfig& c) {
  require_path(c.run, "run", "report");
  if (!fs::is_directory(c.run)) throw DataError("run directory " + c.run.string() + " does not exist");
  const fs::path dir = stage_dir(c, "report");
  fs::create_directories(dir);
  std::vector<std::string> warnings;

  // Inventory of every stage's files.
  {
    std::ofstream out(dir / "artifacts.csv");
    out << "stage,file,bytes\n";
    for (const char* stage : {"fuse", "subtype", "network", "ubnin"}) {
      const fs::path s = c.run / stage;
      if (!fs::is_directory(s)) {
        warnings.push_back(std::string("stage ") + stage + " missing: " + s.string());
        continue;
      }
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(s))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), c.run));
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out << stage << ',' << f.generic_string() << ',' << fs::file_size(c.run / f) << '\n';
    }
  }

  fs::path data = c.data;
  if (data.empty() && fs::exists(c.run / "fuse" / kConfigFile)) data = read_run_config(c.run / "fuse" / kConfigFile)["data"];
  std::vector<ClinicalRecord> clinical;
  if (!data.empty() && fs::exists(data / "clinical.csv")) clinical = read_clinical_csv(data / "clinical.csv");
  else warnings.push_back("clinical.csv not found; group and clinical columns left empty");
  const auto records = index_records(clinical);

  // Loadings by group for the ranked components.
  const fs::path loadings_path = c.run / "fuse" / "loadings.csv";
  const fs::path ranking_path = c.run / "fuse" / "ranking.csv";
  std::optional<jica::LoadingTable> loadings;
  std::vector<std::size_t> ranked;
  if (fs::exists(loadings_path) && fs::exists(ranking_path)) {
    loadings = jica::read_loadings_csv(loadings_path);
    ranked = subtype::read_ranking_csv(ranking_path).order;
    std::ofstream out(dir / "loadings_violin.csv");
    out << "component,rank,subject_id,group,loading\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      for (std::size_t s = 0; s < loadings->subject_ids.size(); ++s) {
        const auto& id = loadings->subject_ids[s];
        const auto it = records.find(id);
        out << "comp_" << ranked[r] + 1 << ',' << r + 1 << ',' << id << ','
            << (it != records.end() ? to_string(it->second->group) : "") << ','
            << csv::format(loadings->loadings(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(ranked[r])))
            << '\n';
      }
    }
  } else {
    warnings.push_back("fuse outputs missing; loadings_violin.csv not written");
  }

  // Subtype sizes and loading-vs-clinical scatter data.
  const fs::path subtypes_path = c.run / "subtype" / "subtypes.csv";
  if (fs::exists(subtypes_path)) {
    const auto assignment = subtype::read_subtype_csv(subtypes_path);
    {
      std::ofstream out(dir / "subtype_counts.csv");
      out << "label,count\n";
      for (auto l : {subtype::Label::A, subtype::Label::B, subtype::Label::AB, subtype::Label::Unassigned})
        out << subtype::to_string(l) << ',' << assignment.members(l).size() << '\n';
    }
    if (loadings && !clinical.empty()) {
      const auto imputed = impute_clinical(clinical);
      const auto imputed_of = index_records(imputed);
      std::unordered_map<std::string, std::size_t> row_of;
      for (std::size_t i = 0; i < loadings->subject_ids.size(); ++i) row_of[loadings->subject_ids[i]] = i;
      std::ofstream out(dir / "clinical_scatter.csv");
      out << "subtype,component,subject_id,loading,updrs_off,updrs_on,hy,age_at_onset\n";
      const auto cell = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); };
      for (auto l : {subtype::Label::A, subtype::Label::B, subtype::Label::AB}) {
        for (std::size_t r = 0; r < std::min<std::size_t>(2, ranked.size()); ++r) {
          for (const auto& id : assignment.members(l)) {
            const auto row = row_of.find(id);
            const auto rec = imputed_of.find(id);
            if (row == row_of.end() || rec == imputed_of.end()) continue;
            const auto* p = rec->second;
            out << subtype::to_string(l) << ",comp_" << ranked[r] + 1 << ',' << id << ','
                << csv::format(loadings->loadings(static_cast<Eigen::Index>(row->second), static_cast<Eigen::Index>(ranked[r])))
                << ',' << cell(p->updrs_off) << ',' << cell(p->updrs_on) << ',' << cell(p->hy) << ','
                << cell(p->age_at_onset) << '\n';
          }
        }
      }
    }
  } else {
    warnings.push_back("subtype outputs missing; subtype_counts.csv and clinical_scatter.csv not written");
  }

  // Network scalars and nodal distributions.
  std::vector<fs::path> networks;
  if (fs::is_directory(c.run / "network"))
    for (const auto& e : fs::directory_iterator(c.run / "network"))
      if (fs::exists(e.path() / "metrics.json")) networks.push_back(e.path());
  std::sort(networks.begin(), networks.end());
  if (networks.empty()) {
    warnings.push_back("no network metrics found; network_summary.csv and nodal_violin.csv not written");
  } else {
    std::ofstream summary(dir / "network_summary.csv");
    std::ofstream nodal(dir / "nodal_violin.csv");
    const std::vector<std::string> scalars{"density", "average_degree", "global_efficiency",
                                           "characteristic_path_length", "transitivity", "mean_clustering",
                                           "assortativity", "modularity", "gamma", "lambda"};
    const std::vector<std::string> nodal_keys{"degree", "betweenness", "clustering", "eigenvector_centrality",
                                              "participation_coefficient"};
    summary << "network,nodes,edges";
    for (const auto& s : scalars) summary << ',' << s;
    summary << '\n';
    nodal << "network,region";
    for (const auto& s : nodal_keys) nodal << ',' << s;
    nodal << '\n';
    for (const auto& n : networks) {
      nlohmann::json j;
      try {
        std::ifstream in(n / "metrics.json");
        in >> j;
        const std::string name = n.filename().string();
        summary << name << ',' << j.at("nodes").get<std::size_t>() << ',' << j.at("edges").get<std::size_t>();
        for (const auto& s : scalars) {
          const auto& v = j.at("scalars").at(s);
          summary << ',' << (v.is_null() ? std::string() : csv::format(v.get<double>()));
        }
        summary << '\n';
        for (const auto& region : j.at("region_order")) {
          const auto r = region.get<std::string>();
          nodal << name << ',' << r;
          for (const auto& key : nodal_keys) nodal << ',' << csv::format(j.at("nodal").at(key).at(r).get<double>());
          nodal << '\n';
        }
      } catch (const nlohmann::json::exception& e) {
        throw DataError((n / "metrics.json").string() + ": " + e.what());
      }
    }
  }

  write_text(dir / "warnings.txt", warnings);
  write_run_config(dir, c);
  std::cout << "report: " << dir.string() << " (" << warnings.size() << " warnings)\n";
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// ---- entry point --------------------------------------------------------------

int run(int argc, const char* const* argv) {
  RunConfig c;
  CLI::App app{"neurofuse: joint GM/WM ICA fusion, subtyping and cross-tissue networks"};
  app.set_config("--config", "", "Read options from a key = value file (see run_config.txt)");
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", NEUROFUSE_VERSION);

  app.add_option("--data", c.data, "Dataset directory (synth output layout)");
  app.add_option("--run", c.run, "Run directory; each stage writes <run>/<stage>/");
  app.add_option("--out", c.out, "Output directory for synth, metrics and permtest");
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app.add_option("--components", c.components, "Number of ICA components C")->capture_default_str();
  app.add_option("--max-iter", c.max_iter, "Infomax iteration cap")->capture_default_str();
  app.add_option("--k", c.k, "MKNN neighbours (0 = floor(sqrt(R)))")->capture_default_str();
  app.add_option("--fdr-q", c.fdr_q, "Benjamini-Hochberg FDR level")->capture_default_str();
  app.add_option("--n-perm", c.n_perm, "Permutations for permtest")->capture_default_str();
  app.add_option("--n-null", c.n_null, "Null graphs for gamma/lambda")->capture_default_str();
  app.add_option("--hub-mode", c.hub_mode, "either | both")->capture_default_str();
  app.add_option("--partition", c.partition, "modularity | hemisphere")->capture_default_str();
  app.add_flag("--drop-outliers", c.drop_outliers, "Drop subjects flagged by outlier screening before ICA");
  app.add_option("--outlier-sd", c.outlier_sd, "Outlier screening SD multiplier")->capture_default_str();
  app.add_flag("--rank-abs", c.rank_abs, "Rank MKNN neighbours by |r|");
  app.add_option("--threshold-mean", c.threshold_mean, "Loading threshold anchor: pd | all")->capture_default_str();
  app.add_flag("--self-pairs", c.self_pairs, "Keep GM_i-WM_i pairs in exported edge lists");
  app.add_option("--subtype", c.subtype, "Network group: all | HC | PD | A | B | AB")->capture_default_str();
  app.add_option("--graph", c.graph, "Region-graph CSV for metrics");
  app.add_option("--atlas", c.atlas, "Atlas CSV for metrics");
  app.add_option("--a", c.a, "First metrics JSON for permtest");
  app.add_option("--b", c.b, "Second metrics JSON for permtest");
  app.add_option("--metric", c.metric, "Nodal metric compared by permtest")->capture_default_str();
  app.add_option("--method", c.method, "permutation | t")->capture_default_str();
  app.add_option("--n-hc", c.n_hc, "synth: healthy controls")->capture_default_str();
  app.add_option("--n-pd", c.n_pd, "synth: patients")->capture_default_str();
  app.add_option("--gm-voxels", c.gm_voxels, "synth: GM voxels")->capture_default_str();
  app.add_option("--wm-voxels", c.wm_voxels, "synth: WM voxels")->capture_default_str();
  app.add_option("--n-sources", c.n_sources, "synth: planted sources")->capture_default_str();
  app.add_option("--noise-sd", c.noise_sd, "synth: voxel noise SD")->capture_default_str();
  app.add_option("--regions", c.regions, "synth: atlas regions")->capture_default_str();

  const std::vector<std::pair<const char*, const char*>> commands{
      {"synth", "Write a synthetic dataset to --out"},
      {"fuse", "Joint ICA on <data>/voxels.nfvx; ranks components by group effect"},
      {"subtype", "Assign PD subtypes from the top two ranked components"},
      {"network", "MKNN cross-tissue networks, metrics and hubs per group"},
      {"metrics", "Graph metrics and hubs for a region-graph CSV"},
      {"ubnin", "Per-subject UBNIN codes"},
      {"permtest", "Compare a nodal metric between two metrics JSON files"},
      {"report", "Summary tables and plot data for a run directory"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  c.command = app.get_subcommands().front()->get_name();

  try {
    validate(c);
    if (c.command == "synth") cmd_synth(c);
    else if (c.command == "fuse") cmd_fuse(c);
    else if (c.command == "subtype") cmd_subtype(c);
    else if (c.command == "network") cmd_network(c);
    else if (c.command == "metrics") cmd_metrics(c);
    else if (c.command == "ubnin") cmd_ubnin(c);
    else if (c.command == "permtest") cmd_permtest(c);
    else cmd_report(c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace neurofuse::cli
