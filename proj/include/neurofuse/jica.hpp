#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurofuse/ingest.hpp"

namespace neurofuse::jica {

/// Subject-space PCA whitening. Data are double-centred (voxel means, then subject
/// means) before the Gram matrix is decomposed.
struct WhiteningTransform {
  Eigen::MatrixXd whitening;    // C x subjects
  Eigen::MatrixXd dewhitening;  // subjects x C
  Eigen::VectorXd eigenvalues;  // retained, descending
  double total_variance = 0.0;  // sum of all Gram eigenvalues
  Eigen::RowVectorXd column_means;
  Eigen::VectorXd row_means;

  std::size_t components() const { return static_cast<std::size_t>(eigenvalues.size()); }
  double retained_fraction() const {
    return total_variance > 0 ? eigenvalues.sum() / total_variance : 0.0;
  }
};

struct Whitened {
  Eigen::MatrixXd data;  // C x voxels, identity covariance
  WhiteningTransform transform;
};

Whitened pca_whiten(const Eigen::MatrixXd& matrix, std::size_t n_components);
inline Whitened pca_whiten(const VoxelFeatureMatrix& matrix, std::size_t n_components) {
  return pca_whiten(matrix.values, n_components);
}

enum class InfomaxSolver {
  natural_gradient,  // plain natural-gradient ascent with an adaptive learning rate
  quasi_newton,      // L-BFGS in relative coordinates, pairwise Hessian as initial metric
};

struct InfomaxOptions {
  std::uint64_t seed = 0;
  InfomaxSolver solver = InfomaxSolver::quasi_newton;
  double learning_rate = 1e-2;
  double anneal = 0.9;   // learning-rate factor after a rejected (non-ascending) step
  double growth = 1.05;  // learning-rate factor after an accepted step
  double tol = 1e-6;
  std::size_t max_iter = 512;
  std::size_t max_restarts = 8;
};

struct InfomaxResult {
  Eigen::MatrixXd unmixing;  // W, C x C
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double learning_rate = 0.0;  // value at termination
  std::vector<double> objective_trace;  // one entry per accepted step, starting at W0
};

/// Mean log-likelihood of `whitened` under unmixing W with a logistic source prior.
double infomax_objective(const Eigen::MatrixXd& unmixing, const Eigen::MatrixXd& whitened);

/// Full-batch infomax (logistic nonlinearity). A step is kept only if it does not
/// decrease the objective; otherwise the learning rate is annealed and the step
/// retried. Non-finite weights restart from W0 with a reduced rate. The quasi-Newton
/// solver halves a unit step until it ascends; tol applies to the same weight change.
InfomaxResult infomax_unmix(const Eigen::MatrixXd& whitened, const InfomaxOptions& options = {});

struct JicaDecomposition {
  Eigen::MatrixXd loadings;  // subjects x C
  Eigen::MatrixXd sources;   // C x (gm_width + wm_width), rows unit variance
  std::size_t gm_width = 0;
  std::size_t wm_width = 0;
  std::vector<std::string> subject_order;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  bool converged = false;
  double retained_variance = 0.0;

  std::size_t components() const { return static_cast<std::size_t>(sources.rows()); }
};

/// Whitening + infomax. Each source is scaled to unit variance and sign-flipped so its
/// largest-magnitude entry is positive; components are ordered by descending loading
/// variance.
JicaDecomposition decompose_joint(const VoxelFeatureMatrix& matrix, std::size_t n_components = 30,
                                  const InfomaxOptions& options = {});

struct SourceSplit {
  Eigen::MatrixXd gm;  // C x gm_width
  Eigen::MatrixXd wm;  // C x wm_width
};

SourceSplit split_sources(const JicaDecomposition& decomp);

struct SpatialZMap {
  std::size_t component = 0;
  double threshold = 3.5;
  Eigen::VectorXd z;
  std::vector<std::int8_t> mask;  // +1 above, -1 below -threshold, 0 otherwise

  std::size_t survivors() const;
};

SpatialZMap zmap_threshold(std::span<const double> source_row, double z_threshold = 3.5,
                           std::size_t component = 0);

// ---- files ------------------------------------------------------------------

void write_loadings_csv(const std::filesystem::path& path, const JicaDecomposition& decomp);

struct LoadingTable {
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd loadings;
};

LoadingTable read_loadings_csv(const std::filesystem::path& path);

/// Sources as NFVX with rows = C; the sidecar lists comp_1..comp_C.
void write_sources_nfvx(const std::filesystem::path& path, const JicaDecomposition& decomp);

}  // namespace neurofuse::jica
