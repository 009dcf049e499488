#include "neurofuse/jica.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <deque>
#include <numeric>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"
#include "neurofuse/random.hpp"

namespace neurofuse::jica {

Whitened pca_whiten(const Eigen::MatrixXd& matrix, std::size_t n_components) {
  const Eigen::Index n = matrix.rows();
  const Eigen::Index v = matrix.cols();
  if (n < 1 || v < 2) throw DataError("pca_whiten: matrix too small");
  if (n_components < 1 || n_components > static_cast<std::size_t>(std::min(n, v)))
    throw DataError("pca_whiten: n_components must lie in [1, min(subjects, voxels)]");
  if (!matrix.allFinite()) throw DataError("pca_whiten: non-finite input");

  Whitened out;
  WhiteningTransform& t = out.transform;
  t.column_means = matrix.colwise().mean();
  Eigen::MatrixXd centered = matrix.rowwise() - t.column_means;
  t.row_means = centered.rowwise().mean();
  centered.colwise() -= t.row_means;

  const double denom = static_cast<double>(v - 1);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / denom);
  gram = gram.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_whiten: eigendecomposition failed");
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double largest = values(n - 1);
  const double cutoff = std::max(largest, 0.0) * 1e-10 * static_cast<double>(n);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values(i) > cutoff) ++rank;
  }
  if (static_cast<Eigen::Index>(n_components) > rank)
    throw DataError("pca_whiten: n_components=" + std::to_string(n_components) +
                    " exceeds numerical rank " + std::to_string(rank));

  const auto c = static_cast<Eigen::Index>(n_components);
  t.total_variance = values.cwiseMax(0.0).sum();
  t.eigenvalues.resize(c);
  Eigen::MatrixXd vectors(n, c);
  for (Eigen::Index k = 0; k < c; ++k) {
    t.eigenvalues(k) = values(n - 1 - k);
    vectors.col(k) = eig.eigenvectors().col(n - 1 - k);
  }

  const Eigen::VectorXd inv_sqrt = t.eigenvalues.cwiseSqrt().cwiseInverse();
  t.whitening = inv_sqrt.asDiagonal() * vectors.transpose();
  out.data = t.whitening * centered;

  // Fix eigenvector signs from voxel space so the result does not depend on subject order.
  for (Eigen::Index k = 0; k < c; ++k) {
    Eigen::Index arg = 0;
    out.data.row(k).cwiseAbs().maxCoeff(&arg);
    if (out.data(k, arg) < 0) {
      out.data.row(k) *= -1.0;
      t.whitening.row(k) *= -1.0;
      vectors.col(k) *= -1.0;
    }
  }
  t.dewhitening = vectors * t.eigenvalues.cwiseSqrt().asDiagonal();
  return out;
}

namespace {

// log of the logistic density, evaluated without overflow.
inline double log_logistic_density(double u) {
  const double a = std::fabs(u);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

inline double logistic(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double mean_log_density(const Eigen::MatrixXd& u) {
  double sum = 0.0;
  const double* p = u.data();
  for (Eigen::Index i = 0; i < u.size(); ++i) sum += log_logistic_density(p[i]);
  return sum / static_cast<double>(u.cols());
}

double log_abs_det(const Eigen::MatrixXd& w) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(w);
  const Eigen::MatrixXd& m = lu.matrixLU();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) sum += std::log(std::fabs(m(i, i)));
  return sum;
}

Eigen::MatrixXd initial_unmixing(Eigen::Index c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x696e6974ULL);
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(c, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < c; ++i) w(i, j) += 0.1 * standard_normal(rng);
  return w;
}

// Solves the pairwise 2x2 systems of the relative Hessian approximation for the
// logistic infomax likelihood. `ascent` is the natural-gradient direction I - E[psi(u) u^T];
// blocks are shifted so their smallest eigenvalue is at least 1e-2.
Eigen::MatrixXd precondition(const Eigen::MatrixXd& ascent, const Eigen::MatrixXd& u) {
  const Eigen::Index c = u.rows();
  const auto v = static_cast<double>(u.cols());
  Eigen::VectorXd dpsi(c), second(c), diag(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    double sd = 0.0, s2 = 0.0, sdiag = 0.0;
    for (Eigen::Index t = 0; t < u.cols(); ++t) {
      const double x = u(i, t);
      const double sig = logistic(x);
      const double d = 2.0 * sig * (1.0 - sig);
      sd += d;
      s2 += x * x;
      sdiag += d * x * x;
    }
    dpsi(i) = sd / v;
    second(i) = s2 / v;
    diag(i) = sdiag / v + 1.0;
  }
  constexpr double floor = 1e-2;
  Eigen::MatrixXd out(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    out(i, i) = ascent(i, i) / std::max(diag(i), floor);
    for (Eigen::Index j = i + 1; j < c; ++j) {
      double a = dpsi(i) * second(j);
      double b = dpsi(j) * second(i);
      const double smallest = 0.5 * (a + b) - std::sqrt(0.25 * (a - b) * (a - b) + 1.0);
      if (smallest < floor) {
        a += floor - smallest;
        b += floor - smallest;
      }
      const double det = a * b - 1.0;
      out(i, j) = (b * ascent(i, j) - ascent(j, i)) / det;
      out(j, i) = (a * ascent(j, i) - ascent(i, j)) / det;
    }
  }
  return out;
}

Eigen::MatrixXd relative_gradient(const Eigen::MatrixXd& u) {
  Eigen::MatrixXd y(u.rows(), u.cols());
  const double* up = u.data();
  double* yp = y.data();
  for (Eigen::Index i = 0; i < u.size(); ++i) yp[i] = 1.0 - 2.0 * logistic(up[i]);
  return Eigen::MatrixXd::Identity(u.rows(), u.rows()) +
         (y * u.transpose()) / static_cast<double>(u.cols());
}

double dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a.cwiseProduct(b).sum(); }

// Limited-memory quasi-Newton ascent in relative coordinates, W <- (I + step) W, with the
// pairwise Hessian approximation as the initial inverse Hessian.
InfomaxResult lbfgs_unmix(const Eigen::MatrixXd& whitened, const Eigen::MatrixXd& w0,
                          const InfomaxOptions& options) {
  constexpr std::size_t memory = 7;
  constexpr int max_halvings = 30;
  const Eigen::Index c = whitened.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(c, c);

  InfomaxResult result;
  Eigen::MatrixXd w = w0;
  Eigen::MatrixXd u = w * whitened;
  double objective = log_abs_det(w) + mean_log_density(u);
  if (!std::isfinite(objective)) throw NumericalError("infomax_unmix: non-finite initial objective");
  result.objective_trace.push_back(objective);
  Eigen::MatrixXd ascent = relative_gradient(u);

  std::deque<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> history;  // (step, ascent change)
  double rate = 1.0;
  std::size_t iter = 0;
  while (iter < options.max_iter) {
    ++iter;
    // Two-loop recursion on the ascent direction.
    Eigen::MatrixXd q = ascent;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& [s, y] = history[k];
      alpha[k] = dot(s, q) / dot(y, s);
      q -= alpha[k] * y;
    }
    Eigen::MatrixXd direction = precondition(q, u);
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& [s, y] = history[k];
      direction += s * (alpha[k] - dot(y, direction) / dot(y, s));
    }
    if (!direction.allFinite() || dot(direction, ascent) <= 0) {
      history.clear();
      direction = precondition(ascent, u);
    }

    bool accepted = false;
    rate = 1.0;
    for (int h = 0; h < max_halvings; ++h, rate *= 0.5) {
      const Eigen::MatrixXd step = rate * direction;
      Eigen::MatrixXd candidate = (identity + step) * w;
      Eigen::MatrixXd cu = candidate * whitened;
      const double cand_obj = log_abs_det(candidate) + mean_log_density(cu);
      if (!std::isfinite(cand_obj) || cand_obj < objective) continue;
      // Judged on the full quasi-Newton step so a short line-search step cannot stop early.
      const double change = (direction * w).cwiseAbs().maxCoeff();
      Eigen::MatrixXd next_ascent = relative_gradient(cu);
      Eigen::MatrixXd y = ascent - next_ascent;
      if (dot(y, step) > 1e-300) {
        history.emplace_back(step, std::move(y));
        if (history.size() > memory) history.pop_front();
      }
      w = std::move(candidate);
      u = std::move(cu);
      ascent = std::move(next_ascent);
      objective = cand_obj;
      result.objective_trace.push_back(objective);
      accepted = true;
      if (change < options.tol) result.converged = true;
      break;
    }
    if (!accepted) {
      if (!history.empty()) {
        history.clear();
        continue;
      }
      // No ascent direction remains at machine precision.
      result.converged = true;
    }
    if (result.converged) break;
  }
  result.unmixing = std::move(w);
  result.iterations = iter;
  result.objective = objective;
  result.learning_rate = rate;
  return result;
}

}  // namespace

double infomax_objective(const Eigen::MatrixXd& unmixing, const Eigen::MatrixXd& whitened) {
  const Eigen::MatrixXd u = unmixing * whitened;
  return log_abs_det(unmixing) + mean_log_density(u);
}

InfomaxResult infomax_unmix(const Eigen::MatrixXd& whitened, const InfomaxOptions& options) {
  const Eigen::Index c = whitened.rows();
  const Eigen::Index v = whitened.cols();
  if (c < 1 || v < 2) throw DataError("infomax_unmix: empty input");
  if (options.max_iter < 1) throw DataError("infomax_unmix: max_iter must be >= 1");
  if (!(options.learning_rate > 0) || !(options.anneal > 0 && options.anneal < 1))
    throw DataError("infomax_unmix: invalid learning-rate schedule");

  const Eigen::MatrixXd w0 = initial_unmixing(c, options.seed);
  if (options.solver == InfomaxSolver::quasi_newton) return lbfgs_unmix(whitened, w0, options);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(c, c);
  double start_rate = options.learning_rate;

  for (std::size_t attempt = 0; attempt <= options.max_restarts; ++attempt) {
    InfomaxResult result;
    Eigen::MatrixXd w = w0;
    Eigen::MatrixXd u = w * whitened;
    double objective = log_abs_det(w) + mean_log_density(u);
    double rate = start_rate;
    bool diverged = !std::isfinite(objective);
    result.objective_trace.push_back(objective);

    Eigen::MatrixXd y(c, v);
    std::size_t iter = 0;
    while (!diverged && iter < options.max_iter) {
      ++iter;
      const double* up = u.data();
      double* yp = y.data();
      for (Eigen::Index i = 0; i < u.size(); ++i) yp[i] = 1.0 - 2.0 * logistic(up[i]);
      const Eigen::MatrixXd relative = identity + (y * u.transpose()) / static_cast<double>(v);
      const Eigen::MatrixXd direction = relative * w;
      if (!direction.allFinite()) {
        diverged = true;
        break;
      }

      // Anneal until the step does not decrease the objective.
      bool accepted = false;
      while (rate > 1e-12) {
        Eigen::MatrixXd candidate = w + rate * direction;
        Eigen::MatrixXd cu = candidate * whitened;
        const double cand_obj = log_abs_det(candidate) + mean_log_density(cu);
        if (!candidate.allFinite()) {
          diverged = true;
          break;
        }
        if (std::isfinite(cand_obj) && cand_obj >= objective) {
          const double change = (rate * direction).cwiseAbs().maxCoeff();
          w = std::move(candidate);
          u = std::move(cu);
          objective = cand_obj;
          result.objective_trace.push_back(objective);
          accepted = true;
          if (change < options.tol) result.converged = true;
          rate *= options.growth;
          break;
        }
        rate *= options.anneal;
      }
      if (diverged || result.converged) break;
      if (!accepted) {
        // No ascent direction remains at machine precision.
        result.converged = true;
        break;
      }
    }

    if (!diverged && w.allFinite()) {
      result.unmixing = std::move(w);
      result.iterations = iter;
      result.objective = objective;
      result.learning_rate = rate;
      return result;
    }
    start_rate *= options.anneal;
  }
  throw NumericalError("infomax_unmix: weights diverged after learning-rate retries");
}

JicaDecomposition decompose_joint(const VoxelFeatureMatrix& matrix, std::size_t n_components,
                                  const InfomaxOptions& options) {
  validate(matrix);
  const Whitened white = pca_whiten(matrix.values, n_components);
  const InfomaxResult ica = infomax_unmix(white.data, options);

  Eigen::MatrixXd sources = ica.unmixing * white.data;
  Eigen::MatrixXd loadings = white.transform.dewhitening * ica.unmixing.inverse();
  const Eigen::Index c = sources.rows();
  const double denom = static_cast<double>(sources.cols() - 1);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double mu = sources.row(k).mean();
    const double sd = std::sqrt((sources.row(k).array() - mu).square().sum() / denom);
    if (!(sd > 0)) throw NumericalError("decompose_joint: degenerate source");
    Eigen::Index arg = 0;
    sources.row(k).cwiseAbs().maxCoeff(&arg);
    const double scale = sources(k, arg) < 0 ? -sd : sd;
    sources.row(k) /= scale;
    loadings.col(k) *= scale;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd variance(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double mu = loadings.col(k).mean();
    variance(k) = (loadings.col(k).array() - mu).square().sum();
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return variance(a) > variance(b); });

  JicaDecomposition d;
  d.loadings.resize(loadings.rows(), c);
  d.sources.resize(c, sources.cols());
  for (Eigen::Index k = 0; k < c; ++k) {
    d.loadings.col(k) = loadings.col(order[static_cast<std::size_t>(k)]);
    d.sources.row(k) = sources.row(order[static_cast<std::size_t>(k)]);
  }
  d.gm_width = matrix.gm_width;
  d.wm_width = matrix.wm_width;
  d.subject_order = matrix.subject_order;
  d.seed = options.seed;
  d.iterations = ica.iterations;
  d.converged = ica.converged;
  d.retained_variance = white.transform.retained_fraction();
  return d;
}

SourceSplit split_sources(const JicaDecomposition& decomp) {
  const auto gm = static_cast<Eigen::Index>(decomp.gm_width);
  const auto wm = static_cast<Eigen::Index>(decomp.wm_width);
  if (gm < 1 || wm < 1 || decomp.sources.cols() != gm + wm)
    throw DataError("split_sources: widths inconsistent with source matrix");
  return {decomp.sources.leftCols(gm), decomp.sources.rightCols(wm)};
}

std::size_t SpatialZMap::survivors() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                [](std::int8_t m) { return m != 0; }));
}

SpatialZMap zmap_threshold(std::span<const double> row, double z_threshold, std::size_t component) {
  if (row.size() < 2) throw DataError("zmap_threshold: need at least 2 voxels");
  const double n = static_cast<double>(row.size());
  const double mu = std::accumulate(row.begin(), row.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : row) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0)) throw NumericalError("zmap_threshold: zero-variance source row");

  SpatialZMap map;
  map.component = component;
  map.threshold = z_threshold;
  map.z.resize(static_cast<Eigen::Index>(row.size()));
  map.mask.assign(row.size(), 0);
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double z = (row[i] - mu) / sd;
    map.z(static_cast<Eigen::Index>(i)) = z;
    if (std::fabs(z) > z_threshold) map.mask[i] = z > 0 ? 1 : -1;
  }
  return map;
}

void write_loadings_csv(const std::filesystem::path& path, const JicaDecomposition& decomp) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subject_id";
  for (std::size_t k = 1; k <= decomp.components(); ++k) out << ",comp_" << k;
  out << '\n';
  for (Eigen::Index r = 0; r < decomp.loadings.rows(); ++r) {
    out << decomp.subject_order[static_cast<std::size_t>(r)];
    for (Eigen::Index k = 0; k < decomp.loadings.cols(); ++k)
      out << ',' << csv::format(decomp.loadings(r, k));
    out << '\n';
  }
}

LoadingTable read_loadings_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  if (table.header.size() < 2 || table.header[0] != "subject_id")
    throw DataError(path.string() + ": loadings header must start with subject_id");
  for (std::size_t k = 1; k < table.header.size(); ++k) {
    if (table.header[k] != "comp_" + std::to_string(k))
      throw DataError(path.string() + ": unexpected column " + table.header[k]);
  }
  LoadingTable t;
  const auto c = static_cast<Eigen::Index>(table.header.size() - 1);
  t.loadings.resize(static_cast<Eigen::Index>(table.rows.size()), c);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    t.subject_ids.push_back(table.rows[r][0]);
    for (Eigen::Index k = 0; k < c; ++k)
      t.loadings(static_cast<Eigen::Index>(r), k) =
          csv::parse_double(table.rows[r][static_cast<std::size_t>(k + 1)], path.string());
  }
  return t;
}

void write_sources_nfvx(const std::filesystem::path& path, const JicaDecomposition& decomp) {
  VoxelFeatureMatrix m;
  m.values = decomp.sources;
  m.gm_width = decomp.gm_width;
  m.wm_width = decomp.wm_width;
  for (std::size_t k = 1; k <= decomp.components(); ++k) m.subject_order.push_back("comp_" + std::to_string(k));
  write_nfvx(path, m);
}

}  // namespace neurofuse::jica
