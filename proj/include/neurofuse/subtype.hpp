#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurofuse/ingest.hpp"

namespace neurofuse::subtype {

struct ComponentStats {
  std::size_t component = 0;  // 0-based column index
  double t = 0.0;
  double p = 1.0;
  double p_fdr = 1.0;
  double hedges_g = 0.0;
  bool significant = false;
  std::size_t rank = 0;  // 1-based among significant components, 0 otherwise
  std::string error;     // non-empty when the per-component test failed
};

struct ComponentRanking {
  std::vector<ComponentStats> components;  // in component order
  std::vector<std::size_t> order;          // significant components, |g| descending
  double q = 0.05;
};

/// HC-vs-PD t test and Hedges' g per loading column, BH-FDR across columns, then the
/// FDR survivors sorted by |g| (ties: lower index first).
ComponentRanking rank_components(const Eigen::MatrixXd& loadings, std::span<const Group> groups,
                                 double q = 0.05);

/// Patients whose loading lies strictly beyond the anchor mean on the mean's side.
/// The anchor defaults to the mean of `loadings`; a zero mean takes the positive branch.
std::vector<std::size_t> threshold_loadings(std::span<const double> loadings,
                                            std::optional<double> anchor_mean = std::nullopt);

enum class Label { A, B, AB, Unassigned };

std::string to_string(Label label);
Label label_from_string(const std::string& text);

struct Assignment {
  std::string subject_id;
  Label label = Label::Unassigned;
  std::string selected_by;  // e.g. "comp_3", "comp_3+comp_7", or empty
};

struct SubtypeAssignment {
  std::vector<Assignment> patients;  // cohort order

  std::vector<std::string> members(Label label) const;
};

/// A = sel1 \ sel2, B = sel2 \ sel1, AB = sel1 & sel2, Unassigned = the rest.
/// `source_1`/`source_2` name the selecting components for provenance.
SubtypeAssignment assign_subtypes(std::span<const std::string> selection_1,
                                  std::span<const std::string> selection_2,
                                  std::span<const std::string> pd_cohort,
                                  const std::string& source_1 = "sel1",
                                  const std::string& source_2 = "sel2");

struct ClinicalCorrelation {
  Label subtype = Label::A;
  std::size_t component = 0;
  std::string variable;
  std::size_t n = 0;
  double r = 0.0;
  double p = 1.0;
  bool significant = false;  // p < 0.05
};

struct CorrelationTable {
  std::vector<ClinicalCorrelation> rows;
  std::vector<std::string> notices;  // skipped subtypes / variables
};

/// Pearson correlation of loadings with each clinical variable, per subtype and per
/// selected component. Subtypes with fewer than 3 patients are skipped with a notice.
CorrelationTable correlate_loadings_clinical(const SubtypeAssignment& assignment,
                                             std::span<const std::string> loading_ids,
                                             const Eigen::MatrixXd& loadings,
                                             std::span<const std::size_t> components,
                                             std::span<const ClinicalRecord> clinical);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// ---- files ------------------------------------------------------------------

void write_ranking_csv(const std::filesystem::path& path, const ComponentRanking& ranking);
ComponentRanking read_ranking_csv(const std::filesystem::path& path);
void write_subtype_csv(const std::filesystem::path& path, const SubtypeAssignment& assignment);
SubtypeAssignment read_subtype_csv(const std::filesystem::path& path);
void write_correlation_csv(const std::filesystem::path& path, const CorrelationTable& table);

}  // namespace neurofuse::subtype
