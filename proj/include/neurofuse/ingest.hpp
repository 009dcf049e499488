#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace neurofuse {

enum class Group { HC, PD };
enum class Gender { M, F };

std::string to_string(Group g);
std::string to_string(Gender g);

struct ClinicalRecord {
  std::string subject_id;
  Group group = Group::HC;
  double age = 0.0;
  Gender gender = Gender::M;
  std::optional<double> updrs_off;
  std::optional<double> updrs_on;
  std::optional<double> hy;
  std::optional<double> age_at_onset;
};

/// Throws DataError when a record violates its invariants.
void validate(const ClinicalRecord& record);

/// Subjects x (gm_width + wm_width) joint feature matrix.
struct VoxelFeatureMatrix {
  Eigen::MatrixXd values;
  std::size_t gm_width = 0;
  std::size_t wm_width = 0;
  std::vector<std::string> subject_order;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t total_voxels() const { return gm_width + wm_width; }
};

void validate(const VoxelFeatureMatrix& matrix);

/// Named design matrix, one row per subject.
struct CovariateDesign {
  Eigen::MatrixXd columns;
  std::vector<std::string> names;
};

/// Intercept, age, gender (M = 0, F = 1) and age x gender.
CovariateDesign make_covariate_design(std::span<const double> ages,
                                      std::span<const Gender> genders);

CovariateDesign intercept_only_design(std::size_t n_subjects);

enum class OutlierStatus { ok, zero_variance };

struct OutlierEntry {
  std::string subject_id;
  std::optional<double> correlation;  // empty when undefined
  double threshold = 0.0;  // leave-one-out cutoff this subject was compared against
  bool flagged = false;
  OutlierStatus status = OutlierStatus::ok;
};

struct OutlierReport {
  std::vector<OutlierEntry> entries;
  double sd_multiplier = 3.0;

  std::vector<std::size_t> flagged_rows() const;
};

/// Fill missing entries with the winsorized mean of the present ones.
/// k = round(winsor_fraction * n) values are clamped at each tail before averaging.
std::vector<double> impute_winsorized(std::span<const std::optional<double>> values,
                                      double winsor_fraction = 0.05);

/// Per-voxel OLS against the design; returns residuals plus the voxel mean.
VoxelFeatureMatrix regress_covariates(const VoxelFeatureMatrix& matrix,
                                      const CovariateDesign& design);

/// Correlates each subject row with the group mean row and flags subjects whose
/// correlation falls below mean - sd_multiplier * sd of the *other* subjects'
/// correlations. Report only; nothing is dropped.
OutlierReport screen_outliers(const VoxelFeatureMatrix& matrix, double sd_multiplier = 3.0);

VoxelFeatureMatrix assemble_joint_matrix(const Eigen::MatrixXd& gm, const Eigen::MatrixXd& wm,
                                         std::vector<std::string> ids);

/// Copy of `matrix` without the given rows.
VoxelFeatureMatrix drop_rows(const VoxelFeatureMatrix& matrix, std::span<const std::size_t> rows);

/// Imputes every optional clinical variable over the PD records only.
std::vector<ClinicalRecord> impute_clinical(std::vector<ClinicalRecord> records,
                                            double winsor_fraction = 0.05);

// ---- file formats --------------------------------------------------------

std::vector<ClinicalRecord> read_clinical_csv(const std::filesystem::path& path);
void write_clinical_csv(const std::filesystem::path& path,
                        std::span<const ClinicalRecord> records);

/// Path of the subject-id sidecar for an NFVX file (`<file>.ids`).
std::filesystem::path nfvx_sidecar(const std::filesystem::path& path);

/// "NFVX" magic, u32 version, u32 rows, u64 gm cols, u64 wm cols, f32 LE row-major.
void write_nfvx(const std::filesystem::path& path, const VoxelFeatureMatrix& matrix);
VoxelFeatureMatrix read_nfvx(const std::filesystem::path& path);

}  // namespace neurofuse
