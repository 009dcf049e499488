#include "neurofuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "neurofuse/error.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/stats.hpp"

namespace neurofuse::synth {

namespace {

// Sub-stream ids.
constexpr std::uint64_t kSources = 1, kLoadings = 2, kSubtypes = 3, kNoise = 4, kClinical = 5,
                        kMissing = 6, kFactors = 7, kTestbedNoise = 8, kMatching = 9;

std::string padded(const std::string& prefix, std::size_t i, std::size_t total) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(total).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + buf;
}

double round_to(double x, double step) { return std::round(x / step) * step; }

}  // namespace

void validate(const SynthConfig& c) {
  if (c.n_hc < 2) throw DataError("synth: n_hc must be at least 2");
  if (c.n_pd < 3) throw DataError("synth: n_pd must be at least 3");
  if (c.gm_voxels < 1 || c.wm_voxels < 1) throw DataError("synth: both tissues need voxels");
  if (c.n_sources < 1) throw DataError("synth: n_sources must be positive");
  if (c.n_sources > std::min(c.gm_voxels, c.wm_voxels))
    throw DataError("synth: each source needs its own voxel block in both tissues");
  if (c.n_sources >= c.n_hc + c.n_pd)
    throw DataError("synth: " + std::to_string(c.n_sources) + " sources need more than " +
                    std::to_string(c.n_hc + c.n_pd) + " subjects");
  if (c.plant_subtypes && c.n_sources < 2) throw DataError("synth: planted subtypes need 2 sources");
  if (c.effect_sizes.size() > c.n_sources)
    throw DataError("synth: more effect sizes than sources");
  if (!(c.noise_sd >= 0.0) || !std::isfinite(c.noise_sd)) throw DataError("synth: noise_sd must be >= 0");
  if (c.n_regions < 2 || c.n_regions > std::min(c.gm_voxels, c.wm_voxels))
    throw DataError("synth: n_regions must lie in [2, voxels per tissue]");
  if (c.clinical_coupling.size() != 4) throw DataError("synth: clinical_coupling needs 4 entries");
  for (double r : c.clinical_coupling)
    if (!(std::fabs(r) <= 1.0)) throw DataError("synth: clinical couplings must lie in [-1, 1]");
  if (!(c.missing_fraction >= 0.0 && c.missing_fraction < 1.0))
    throw DataError("synth: missing_fraction must lie in [0, 1)");
  const double f = c.fraction_a + c.fraction_b + c.fraction_ab;
  if (c.fraction_a < 0 || c.fraction_b < 0 || c.fraction_ab < 0 || f > 1.0 + 1e-12)
    throw DataError("synth: subtype fractions must be non-negative and sum to at most 1");
}

std::vector<int> block_labels(std::size_t voxels, std::size_t regions) {
  std::vector<int> labels(voxels);
  for (std::size_t v = 0; v < voxels; ++v) labels[v] = static_cast<int>(v * regions / voxels) + 1;
  return labels;
}

std::vector<netbuild::AtlasRegion> default_atlas(std::size_t regions) {
  std::vector<netbuild::AtlasRegion> atlas;
  const std::size_t left = (regions + 1) / 2;
  for (std::size_t r = 1; r <= regions; ++r) {
    const std::string hemi = r <= left ? "L" : "R";
    atlas.push_back({static_cast<int>(r), padded("roi", r, regions) + "_" + hemi, hemi});
  }
  return atlas;
}

namespace {

netbuild::RegionalVolumeTable aggregate(const Eigen::MatrixXd& tissue, std::span<const int> labels,
                                        const std::vector<netbuild::AtlasRegion>& atlas,
                                        const std::vector<std::string>& ids, netbuild::Tissue kind) {
  std::vector<int> region_ids;
  for (const auto& a : atlas) region_ids.push_back(a.id);
  netbuild::RegionalVolumeTable t;
  t.tissue = kind;
  t.subject_ids = ids;
  for (const auto& a : atlas) t.region_names.push_back(a.name);
  t.values.resize(tissue.rows(), static_cast<Eigen::Index>(atlas.size()));
  for (Eigen::Index s = 0; s < tissue.rows(); ++s) {
    const Eigen::VectorXd row = tissue.row(s).transpose();
    const auto sums = netbuild::aggregate_regional_volumes(
        std::span(row.data(), static_cast<std::size_t>(row.size())), labels, region_ids);
    for (std::size_t r = 0; r < sums.size(); ++r) t.values(s, static_cast<Eigen::Index>(r)) = sums[r];
  }
  return t;
}

}  // namespace

Cohort generate_cohort(const SynthConfig& c) {
  validate(c);
  const std::size_t n = c.n_hc + c.n_pd;
  const std::size_t v = c.gm_voxels + c.wm_voxels;
  const auto S = static_cast<Eigen::Index>(c.n_sources);
  Cohort out;
  GroundTruth& truth = out.truth;

  std::vector<std::string> ids;
  for (std::size_t i = 1; i <= c.n_hc; ++i) ids.push_back(padded("HC", i, c.n_hc));
  for (std::size_t i = 1; i <= c.n_pd; ++i) ids.push_back(padded("PD", i, c.n_pd));
  truth.pd_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(c.n_hc), ids.end());

  // Sparse joint sources: one block in each tissue. Blocks sit in distinct slots so
  // supports never overlap and the planted sources stay uncorrelated.
  truth.sources = Eigen::MatrixXd::Zero(S, static_cast<Eigen::Index>(v));
  std::vector<std::vector<std::size_t>> slot_of(2);
  for (std::size_t tissue = 0; tissue < 2; ++tissue) {
    const std::size_t width = tissue == 0 ? c.gm_voxels : c.wm_voxels;
    auto& slots = slot_of[tissue];
    slots.resize(std::min(width, std::max<std::size_t>(16, c.n_sources)));
    std::iota(slots.begin(), slots.end(), 0);
    Rng rng = make_rng(c.seed, kSources, c.n_sources + tissue);
    for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[uniform_index(rng, i)]);
  }
  for (Eigen::Index k = 0; k < S; ++k) {
    Rng rng = make_rng(c.seed, kSources, static_cast<std::uint64_t>(k));
    for (std::size_t tissue = 0; tissue < 2; ++tissue) {
      const std::size_t width = tissue == 0 ? c.gm_voxels : c.wm_voxels;
      const std::size_t offset = tissue == 0 ? 0 : c.gm_voxels;
      const std::size_t block = width / slot_of[tissue].size();
      const std::size_t start = offset + slot_of[tissue][static_cast<std::size_t>(k)] * block;
      for (std::size_t i = start; i < start + block; ++i)
        truth.sources(k, static_cast<Eigen::Index>(i)) = 1.0 + 0.5 * standard_normal(rng);
    }
  }

  // Subtype membership: a seeded shuffle of the PD patients, cut by the planted fractions.
  truth.subtype_labels.assign(c.n_pd, subtype::Label::Unassigned);
  if (c.plant_subtypes) {
    truth.subtype_sources = {0, 1};
    std::vector<std::size_t> order(c.n_pd);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(c.seed, kSubtypes);
    for (std::size_t i = c.n_pd; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    const auto count = [&](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(c.n_pd))); };
    const std::size_t na = count(c.fraction_a), nb = count(c.fraction_b);
    const std::size_t nab = std::min(count(c.fraction_ab), c.n_pd - std::min(c.n_pd, na + nb));
    for (std::size_t i = 0; i < c.n_pd; ++i) {
      auto& l = truth.subtype_labels[order[i]];
      if (i < na) l = subtype::Label::A;
      else if (i < na + nb) l = subtype::Label::B;
      else if (i < na + nb + nab) l = subtype::Label::AB;
    }
  }

  // Loadings.
  const double j = 1.0 - 3.0 / (4.0 * static_cast<double>(n) - 9.0);
  truth.group_shift.assign(c.n_sources, 0.0);
  for (std::size_t k = 0; k < c.effect_sizes.size(); ++k) truth.group_shift[k] = c.effect_sizes[k] / j;
  truth.loadings.resize(static_cast<Eigen::Index>(n), S);
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = make_rng(c.seed, kLoadings, s);
    const bool pd = s >= c.n_hc;
    const auto label = pd ? truth.subtype_labels[s - c.n_hc] : subtype::Label::Unassigned;
    for (std::size_t k = 0; k < c.n_sources; ++k) {
      double l = standard_normal(rng);
      if (c.plant_subtypes && k < 2) {
        const bool expresses = (k == 0 && (label == subtype::Label::A || label == subtype::Label::AB)) ||
                               (k == 1 && (label == subtype::Label::B || label == subtype::Label::AB));
        if (expresses) l += c.subtype_shift;
      } else if (pd) {
        l += truth.group_shift[k];
      }
      truth.loadings(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = l;
    }
  }
  if (c.plant_subtypes) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double pd_mean = truth.loadings.col(static_cast<Eigen::Index>(k)).tail(static_cast<Eigen::Index>(c.n_pd)).mean();
      const double hc_mean = truth.loadings.col(static_cast<Eigen::Index>(k)).head(static_cast<Eigen::Index>(c.n_hc)).mean();
      truth.group_shift[k] = pd_mean - hc_mean;
    }
  }
  for (Eigen::Index k = 0; k < S; ++k) {
    const Eigen::VectorXd col = truth.loadings.col(k);
    const std::span<const double> all(col.data(), n);
    truth.empirical_g.push_back(stats::hedges_g(all.subspan(c.n_hc), all.first(c.n_hc)).g);
  }

  // Voxels: baseline + signal + noise, stored at single precision like the NFVX files.
  const Eigen::MatrixXd signal = truth.loadings * truth.sources;
  Eigen::MatrixXd data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(v));
  double noise_power = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = make_rng(c.seed, kNoise, s);
    for (std::size_t i = 0; i < v; ++i) {
      const auto r = static_cast<Eigen::Index>(s);
      const auto col = static_cast<Eigen::Index>(i);
      const double e = c.noise_sd * standard_normal(rng);
      noise_power += e * e;
      data(r, col) = static_cast<double>(static_cast<float>(c.baseline + signal(r, col) + e));
    }
  }
  if (data.minCoeff() < 0.0)
    throw DataError("synth: baseline too small, negative voxel values generated");
  const double signal_power = (signal.rowwise() - signal.colwise().mean()).squaredNorm();
  truth.snr = noise_power > 0 ? signal_power / noise_power : std::numeric_limits<double>::infinity();

  out.voxels.values = data;
  out.voxels.gm_width = c.gm_voxels;
  out.voxels.wm_width = c.wm_voxels;
  out.voxels.subject_order = ids;

  // Regions.
  out.atlas = default_atlas(c.n_regions);
  out.gm_labels = block_labels(c.gm_voxels, c.n_regions);
  out.wm_labels = block_labels(c.wm_voxels, c.n_regions);
  out.gm_regions = aggregate(data.leftCols(static_cast<Eigen::Index>(c.gm_voxels)), out.gm_labels,
                             out.atlas, ids, netbuild::Tissue::GM);
  out.wm_regions = aggregate(data.rightCols(static_cast<Eigen::Index>(c.wm_voxels)), out.wm_labels,
                             out.atlas, ids, netbuild::Tissue::WM);

  // Clinical records. Severity tracks the first source's loading among patients.
  truth.clinical_coupling = c.clinical_coupling;
  const Eigen::VectorXd pd0 = truth.loadings.col(0).tail(static_cast<Eigen::Index>(c.n_pd));
  const double mu0 = pd0.mean();
  const double sd0 = std::sqrt((pd0.array() - mu0).square().sum() / static_cast<double>(c.n_pd - 1));
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = make_rng(c.seed, kClinical, s);
    Rng miss = make_rng(c.seed, kMissing, s);
    ClinicalRecord r;
    r.subject_id = ids[s];
    const bool pd = s >= c.n_hc;
    r.group = pd ? Group::PD : Group::HC;
    const double age = pd ? 54.84 + 9.78 * standard_normal(rng) : 49.24 + 10.99 * standard_normal(rng);
    r.age = round_to(std::max(pd ? 30.0 : 20.0, age), 0.1);
    r.gender = uniform01(rng) < (pd ? 45.0 / 180.0 : 18.0 / 70.0) ? Gender::F : Gender::M;
    if (pd) {
      const double z = sd0 > 0 ? (pd0(static_cast<Eigen::Index>(s - c.n_hc)) - mu0) / sd0 : 0.0;
      double e[4];
      for (int k = 0; k < 4; ++k) {
        const double rho = c.clinical_coupling[static_cast<std::size_t>(k)];
        e[k] = rho * z + std::sqrt(1.0 - rho * rho) * standard_normal(rng);
      }
      const double duration = std::max(0.5, 6.0 + 3.0 * e[3]);
      std::optional<double> values[4] = {round_to(32.0 + 12.0 * e[0], 0.1),
                                         round_to(20.0 + 9.0 * e[1], 0.1),
                                         round_to(2.4 + 0.7 * e[2], 0.01),
                                         round_to(r.age - duration, 0.1)};
      for (auto& x : values)
        if (uniform01(miss) < c.missing_fraction) x.reset();
      r.updrs_off = values[0];
      r.updrs_on = values[1];
      r.hy = values[2];
      r.age_at_onset = values[3];
    }
    validate(r);
    out.clinical.push_back(std::move(r));
  }
  return out;
}

std::vector<Edge> random_matching(std::size_t n_regions, std::uint64_t seed) {
  std::vector<std::size_t> perm(n_regions);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, kMatching);
  for (std::size_t i = n_regions; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n_regions; ++i) out.emplace_back(i, perm[i]);
  return out;
}

NetworkTestbed generate_network_testbed(std::size_t n_regions, std::size_t n_subjects,
                                        const std::vector<Edge>& planted, double coupling,
                                        std::uint64_t seed) {
  if (n_regions < 2) throw DataError("testbed: need at least 2 regions");
  if (n_subjects < 3) throw DataError("testbed: need at least 3 subjects");
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw DataError("testbed: coupling must lie in [0, 1]");
  const std::set<Edge> unique(planted.begin(), planted.end());
  if (unique.size() != planted.size()) throw DataError("testbed: duplicate planted pairs");
  for (const auto& [i, j] : planted)
    if (i >= n_regions || j >= n_regions)
      throw DataError("testbed: planted pair (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") outside " + std::to_string(n_regions) + " regions");

  // Nodes 0..R-1 are GM regions, R..2R-1 WM regions.
  std::vector<std::vector<std::size_t>> pairs_of(2 * n_regions);
  for (std::size_t p = 0; p < planted.size(); ++p) {
    pairs_of[planted[p].first].push_back(p);
    pairs_of[n_regions + planted[p].second].push_back(p);
  }
  Eigen::MatrixXd factors(static_cast<Eigen::Index>(n_subjects), static_cast<Eigen::Index>(planted.size()));
  for (std::size_t p = 0; p < planted.size(); ++p) {
    Rng rng = make_rng(seed, kFactors, p);
    for (std::size_t s = 0; s < n_subjects; ++s)
      factors(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p)) = standard_normal(rng);
  }
  const bool coupled = coupling > 0.0;
  const double noise_var = coupled ? 1.0 / coupling - 1.0 : 1.0;

  NetworkTestbed out;
  const auto atlas = default_atlas(n_regions);
  std::vector<std::string> ids;
  for (std::size_t s = 1; s <= n_subjects; ++s) ids.push_back(padded("s", s, n_subjects));
  for (auto* t : {&out.gm, &out.wm}) {
    t->values.resize(static_cast<Eigen::Index>(n_subjects), static_cast<Eigen::Index>(n_regions));
    t->subject_ids = ids;
    for (const auto& a : atlas) t->region_names.push_back(a.name);
  }
  out.gm.tissue = netbuild::Tissue::GM;
  out.wm.tissue = netbuild::Tissue::WM;
  for (std::size_t node = 0; node < 2 * n_regions; ++node) {
    Rng rng = make_rng(seed, kTestbedNoise, node);
    const auto& mine = coupled ? pairs_of[node] : std::vector<std::size_t>{};
    const double sigma2 = mine.empty() ? 1.0 : noise_var;
    const double norm = std::sqrt(static_cast<double>(mine.size()) + sigma2);
    auto& table = node < n_regions ? out.gm : out.wm;
    const auto col = static_cast<Eigen::Index>(node % n_regions);
    for (std::size_t s = 0; s < n_subjects; ++s) {
      double x = std::sqrt(sigma2) * standard_normal(rng);
      for (std::size_t p : mine) x += factors(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p));
      table.values(static_cast<Eigen::Index>(s), col) = 10.0 + x / norm;
    }
  }
  if (out.gm.values.minCoeff() < 0.0 || out.wm.values.minCoeff() < 0.0)
    throw NumericalError("testbed: generated a negative volume");
  out.truth.planted = planted;
  out.truth.coupling = coupling;
  return out;
}

EdgeRecovery score_edge_recovery(const std::vector<Edge>& mutual_pairs,
                                 const std::vector<Edge>& planted, std::size_t n_regions) {
  const std::set<Edge> truth(planted.begin(), planted.end());
  EdgeRecovery r;
  r.planted = truth.size();
  r.negatives = n_regions * n_regions - truth.size();
  for (const auto& e : std::set<Edge>(mutual_pairs.begin(), mutual_pairs.end())) {
    if (truth.count(e)) ++r.true_positives;
    else ++r.false_positives;
  }
  return r;
}

void write_ground_truth_json(const std::filesystem::path& path, const GroundTruth& t,
                             std::span<const std::string> subject_ids) {
  nlohmann::json j;
  j["n_sources"] = t.sources.rows();
  j["subtype_sources"] = t.subtype_sources;
  j["group_shift"] = t.group_shift;
  j["empirical_hedges_g"] = t.empirical_g;
  j["clinical_coupling"] = t.clinical_coupling;
  j["snr"] = std::isfinite(t.snr) ? nlohmann::json(t.snr) : nlohmann::json(nullptr);
  nlohmann::json loadings = nlohmann::json::array();
  for (Eigen::Index s = 0; s < t.loadings.rows(); ++s) {
    std::vector<double> row(t.loadings.cols());
    for (Eigen::Index k = 0; k < t.loadings.cols(); ++k) row[static_cast<std::size_t>(k)] = t.loadings(s, k);
    loadings.push_back({{"subject_id", subject_ids[static_cast<std::size_t>(s)]}, {"loadings", row}});
  }
  j["loadings"] = loadings;
  nlohmann::json subtypes = nlohmann::json::array();
  for (std::size_t i = 0; i < t.pd_ids.size(); ++i)
    subtypes.push_back({{"subject_id", t.pd_ids[i]}, {"label", subtype::to_string(t.subtype_labels[i])}});
  j["pd_subtypes"] = subtypes;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::pair<std::string, subtype::Label>> read_planted_subtypes(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    std::vector<std::pair<std::string, subtype::Label>> out;
    for (const auto& e : j.at("pd_subtypes"))
      out.emplace_back(e.at("subject_id").get<std::string>(),
                       subtype::label_from_string(e.at("label").get<std::string>()));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_cohort(const std::filesystem::path& dir, const Cohort& c) {
  std::filesystem::create_directories(dir);
  write_clinical_csv(dir / "clinical.csv", c.clinical);
  write_nfvx(dir / "voxels.nfvx", c.voxels);
  netbuild::write_region_table_csv(dir / "gm_regions.csv", c.gm_regions);
  netbuild::write_region_table_csv(dir / "wm_regions.csv", c.wm_regions);
  netbuild::write_atlas_csv(dir / "atlas.csv", c.atlas);
  netbuild::write_labels(dir / "gm_labels.txt", c.gm_labels);
  netbuild::write_labels(dir / "wm_labels.txt", c.wm_labels);
  write_ground_truth_json(dir / "ground_truth.json", c.truth, c.voxels.subject_order);

  VoxelFeatureMatrix sources;
  sources.values = c.truth.sources;
  sources.gm_width = c.voxels.gm_width;
  sources.wm_width = c.voxels.wm_width;
  for (Eigen::Index k = 0; k < c.truth.sources.rows(); ++k) sources.subject_order.push_back("src_" + std::to_string(k + 1));
  write_nfvx(dir / "ground_truth_sources.nfvx", sources);
}

}  // namespace neurofuse::synth
