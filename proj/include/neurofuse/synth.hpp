#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurofuse/graph.hpp"
#include "neurofuse/ingest.hpp"
#include "neurofuse/netbuild.hpp"
#include "neurofuse/subtype.hpp"

namespace neurofuse::synth {

struct SynthConfig {
  std::size_t n_hc = 70;
  std::size_t n_pd = 180;
  std::size_t gm_voxels = 5000;
  std::size_t wm_voxels = 5000;
  std::size_t n_sources = 8;
  /// Target Hedges' g (PD vs HC) per source. Missing entries are 0. Entries for the two
  /// subtype sources are ignored: their group difference comes from the subtype shift.
  std::vector<double> effect_sizes{0.0, 0.0, 0.6, 0.4, 0.2};
  double noise_sd = 0.3;
  double baseline = 20.0;
  std::size_t n_regions = 56;
  /// Correlation of updrs_off, updrs_on, hy and disease duration with the first subtype
  /// source's loading among PD patients.
  std::vector<double> clinical_coupling{0.6, 0.5, 0.4, 0.3};
  double missing_fraction = 0.05;

  /// Subtype structure on sources 0 and 1: fractions of PD patients expressing only
  /// source 0 (A), only source 1 (B), or both (AB). The rest are unassigned.
  bool plant_subtypes = true;
  double fraction_a = 51.0 / 180.0;
  double fraction_b = 57.0 / 180.0;
  double fraction_ab = 36.0 / 180.0;
  double subtype_shift = 6.0;

  std::uint64_t seed = 1;
};

void validate(const SynthConfig& config);

struct GroundTruth {
  Eigen::MatrixXd sources;   // n_sources x (gm + wm)
  Eigen::MatrixXd loadings;  // subjects x n_sources, cohort order
  std::vector<double> group_shift;   // planted PD-HC mean shift per source
  std::vector<double> empirical_g;   // Hedges' g (PD vs HC) of the planted loadings
  std::vector<std::size_t> subtype_sources;  // {0, 1} when subtypes are planted
  std::vector<std::string> pd_ids;
  std::vector<subtype::Label> subtype_labels;  // per PD patient
  std::vector<double> clinical_coupling;
  double snr = 0.0;  // signal power over noise power, column-centred
};

struct Cohort {
  VoxelFeatureMatrix voxels;
  netbuild::RegionalVolumeTable gm_regions;
  netbuild::RegionalVolumeTable wm_regions;
  std::vector<int> gm_labels;
  std::vector<int> wm_labels;
  std::vector<netbuild::AtlasRegion> atlas;
  std::vector<ClinicalRecord> clinical;
  GroundTruth truth;
};

/// Contiguous-block atlas: voxel v of a tissue with `voxels` voxels belongs to region
/// floor(v * R / voxels) + 1.
std::vector<int> block_labels(std::size_t voxels, std::size_t regions);
std::vector<netbuild::AtlasRegion> default_atlas(std::size_t regions);

Cohort generate_cohort(const SynthConfig& config);

struct TestbedTruth {
  std::vector<Edge> planted;  // (gm i, wm j)
  double coupling = 0.0;
};

struct NetworkTestbed {
  netbuild::RegionalVolumeTable gm;
  netbuild::RegionalVolumeTable wm;
  TestbedTruth truth;
};

/// Each planted pair gets its own latent factor; a region's volume is the sum of its
/// pairs' factors plus noise sized so degree-1 endpoints correlate at `coupling`.
NetworkTestbed generate_network_testbed(std::size_t n_regions, std::size_t n_subjects,
                                        const std::vector<Edge>& planted, double coupling,
                                        std::uint64_t seed);

/// GM region i paired with WM region perm(i) for a seeded random permutation.
std::vector<Edge> random_matching(std::size_t n_regions, std::uint64_t seed);

struct EdgeRecovery {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t planted = 0;
  std::size_t negatives = 0;  // non-planted (gm, wm) pairs

  double recall() const { return planted ? static_cast<double>(true_positives) / planted : 0.0; }
  double false_positive_rate() const {
    return negatives ? static_cast<double>(false_positives) / negatives : 0.0;
  }
};

/// Scores mutual pairs against the planted pairs over all R x R (gm, wm) pairs.
EdgeRecovery score_edge_recovery(const std::vector<Edge>& mutual_pairs,
                                 const std::vector<Edge>& planted, std::size_t n_regions);

// ---- dataset directory ------------------------------------------------------

/// clinical.csv, voxels.nfvx (+ .ids), gm_regions.csv, wm_regions.csv, atlas.csv,
/// gm_labels.txt, wm_labels.txt, ground_truth.json, ground_truth_sources.nfvx.
void write_cohort(const std::filesystem::path& dir, const Cohort& cohort);

void write_ground_truth_json(const std::filesystem::path& path, const GroundTruth& truth,
                             std::span<const std::string> subject_ids);

/// Planted PD subtype labels from a ground-truth JSON file, keyed by subject id.
std::vector<std::pair<std::string, subtype::Label>> read_planted_subtypes(
    const std::filesystem::path& path);

}  // namespace neurofuse::synth
