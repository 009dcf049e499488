#include "neurofuse/ingest.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"
#include "neurofuse/stats.hpp"

namespace neurofuse {

std::string to_string(Group g) { return g == Group::HC ? "HC" : "PD"; }
std::string to_string(Gender g) { return g == Gender::M ? "M" : "F"; }

void validate(const ClinicalRecord& r) {
  if (r.subject_id.empty()) throw DataError("clinical record with empty subject_id");
  if (!(r.age > 0.0) || !std::isfinite(r.age))
    throw DataError("subject " + r.subject_id + ": age must be positive");
  if (r.age_at_onset && *r.age_at_onset > r.age)
    throw DataError("subject " + r.subject_id + ": age_at_onset exceeds age");
}

void validate(const VoxelFeatureMatrix& m) {
  if (m.gm_width < 1 || m.wm_width < 1) throw DataError("both tissues required");
  if (static_cast<std::size_t>(m.values.cols()) != m.gm_width + m.wm_width)
    throw DataError("voxel matrix width does not equal gm_width + wm_width");
  if (m.subject_order.size() != m.rows())
    throw DataError("subject_order length does not match row count");
  if (!m.values.allFinite()) throw DataError("voxel matrix contains non-finite values");
}

CovariateDesign make_covariate_design(std::span<const double> ages,
                                      std::span<const Gender> genders) {
  if (ages.size() != genders.size()) throw DataError("covariate lengths differ");
  const auto n = static_cast<Eigen::Index>(ages.size());
  CovariateDesign d;
  d.names = {"intercept", "age", "gender", "age_x_gender"};
  d.columns.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = genders[static_cast<std::size_t>(i)] == Gender::F ? 1.0 : 0.0;
    const double a = ages[static_cast<std::size_t>(i)];
    d.columns(i, 0) = 1.0;
    d.columns(i, 1) = a;
    d.columns(i, 2) = g;
    d.columns(i, 3) = a * g;
  }
  return d;
}

CovariateDesign intercept_only_design(std::size_t n_subjects) {
  CovariateDesign d;
  d.names = {"intercept"};
  d.columns = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n_subjects), 1);
  return d;
}

std::vector<std::size_t> OutlierReport::flagged_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].flagged) rows.push_back(i);
  }
  return rows;
}

std::vector<double> impute_winsorized(std::span<const std::optional<double>> values,
                                      double winsor_fraction) {
  if (!(winsor_fraction >= 0.0 && winsor_fraction < 0.5))
    throw DataError("winsor_fraction must lie in [0, 0.5)");
  std::vector<double> present;
  for (const auto& v : values) {
    if (v) present.push_back(*v);
  }
  if (present.empty()) throw DataError("no data to impute");

  std::vector<double> out;
  out.reserve(values.size());
  if (present.size() == values.size()) {
    for (const auto& v : values) out.push_back(*v);
    return out;
  }

  const std::size_t n = present.size();
  std::sort(present.begin(), present.end());
  auto k = static_cast<std::size_t>(std::llround(winsor_fraction * static_cast<double>(n)));
  k = std::min(k, (n - 1) / 2);
  const double lo = present[k];
  const double hi = present[n - 1 - k];
  double sum = 0.0;
  for (double v : present) sum += std::clamp(v, lo, hi);
  const double fill = sum / static_cast<double>(n);

  for (const auto& v : values) out.push_back(v ? *v : fill);
  return out;
}

VoxelFeatureMatrix regress_covariates(const VoxelFeatureMatrix& matrix,
                                      const CovariateDesign& design) {
  validate(matrix);
  const Eigen::MatrixXd& x = design.columns;
  if (x.rows() != matrix.values.rows())
    throw DataError("design has " + std::to_string(x.rows()) + " rows, matrix has " +
                    std::to_string(matrix.values.rows()));
  if (static_cast<std::size_t>(x.cols()) != design.names.size())
    throw DataError("design column names do not match column count");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < x.cols(); ++i) {
      if (!names.empty()) names += ", ";
      names += design.names[static_cast<std::size_t>(perm(i))];
    }
    throw DataError("rank-deficient covariate design; collinear columns: " + names);
  }

  const Eigen::MatrixXd beta = qr.solve(matrix.values);
  VoxelFeatureMatrix out = matrix;
  const Eigen::RowVectorXd col_mean = matrix.values.colwise().mean();
  out.values = matrix.values - x * beta;
  out.values.rowwise() += col_mean;
  return out;
}

OutlierReport screen_outliers(const VoxelFeatureMatrix& matrix, double sd_multiplier) {
  validate(matrix);
  const std::size_t n = matrix.rows();
  if (n < 3) throw DataError("insufficient subjects for outlier screening (need >= 3)");
  if (!(sd_multiplier >= 0.0)) throw DataError("sd_multiplier must be non-negative");

  const Eigen::RowVectorXd mean_row = matrix.values.colwise().mean();
  std::span<const double> mean_span(mean_row.data(), static_cast<std::size_t>(mean_row.size()));

  OutlierReport report;
  report.sd_multiplier = sd_multiplier;
  report.entries.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto& e = report.entries[s];
    e.subject_id = matrix.subject_order[s];
    const Eigen::RowVectorXd row = matrix.values.row(static_cast<Eigen::Index>(s));
    std::span<const double> row_span(row.data(), static_cast<std::size_t>(row.size()));
    try {
      e.correlation = stats::pearson_r(row_span, mean_span);
    } catch (const NumericalError&) {
      e.status = OutlierStatus::zero_variance;
      e.flagged = true;
    }
  }

  for (std::size_t s = 0; s < n; ++s) {
    auto& e = report.entries[s];
    if (!e.correlation) continue;
    std::vector<double> others;
    for (std::size_t t = 0; t < n; ++t) {
      if (t != s && report.entries[t].correlation) others.push_back(*report.entries[t].correlation);
    }
    if (others.size() < 2) continue;
    e.threshold = stats::mean(others) - sd_multiplier * stats::sample_sd(others);
    e.flagged = *e.correlation < e.threshold - 1e-12;
  }
  return report;
}

VoxelFeatureMatrix assemble_joint_matrix(const Eigen::MatrixXd& gm, const Eigen::MatrixXd& wm,
                                         std::vector<std::string> ids) {
  if (gm.cols() == 0 || wm.cols() == 0) throw DataError("both tissues required");
  if (gm.rows() != wm.rows())
    throw DataError("GM and WM row counts differ (" + std::to_string(gm.rows()) + " vs " +
                    std::to_string(wm.rows()) + ")");
  if (static_cast<std::size_t>(gm.rows()) != ids.size())
    throw DataError("subject id count does not match matrix rows");
  VoxelFeatureMatrix m;
  m.values.resize(gm.rows(), gm.cols() + wm.cols());
  m.values << gm, wm;
  m.gm_width = static_cast<std::size_t>(gm.cols());
  m.wm_width = static_cast<std::size_t>(wm.cols());
  m.subject_order = std::move(ids);
  return m;
}

VoxelFeatureMatrix drop_rows(const VoxelFeatureMatrix& matrix, std::span<const std::size_t> rows) {
  std::vector<bool> drop(matrix.rows(), false);
  for (std::size_t r : rows) {
    if (r >= matrix.rows()) throw DataError("drop_rows: row index out of range");
    drop[r] = true;
  }
  VoxelFeatureMatrix out;
  out.gm_width = matrix.gm_width;
  out.wm_width = matrix.wm_width;
  std::vector<Eigen::Index> keep;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    if (!drop[r]) {
      keep.push_back(static_cast<Eigen::Index>(r));
      out.subject_order.push_back(matrix.subject_order[r]);
    }
  }
  out.values.resize(static_cast<Eigen::Index>(keep.size()), matrix.values.cols());
  for (std::size_t i = 0; i < keep.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) = matrix.values.row(keep[i]);
  return out;
}

std::vector<ClinicalRecord> impute_clinical(std::vector<ClinicalRecord> records,
                                            double winsor_fraction) {
  using Field = std::optional<double> ClinicalRecord::*;
  for (Field field : {&ClinicalRecord::updrs_off, &ClinicalRecord::updrs_on, &ClinicalRecord::hy,
                      &ClinicalRecord::age_at_onset}) {
    std::vector<std::optional<double>> column;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].group != Group::PD) continue;
      column.push_back(records[i].*field);
      index.push_back(i);
    }
    if (std::none_of(column.begin(), column.end(), [](const auto& v) { return v.has_value(); }))
      continue;
    const auto filled = impute_winsorized(column, winsor_fraction);
    for (std::size_t k = 0; k < index.size(); ++k) records[index[k]].*field = filled[k];
  }
  return records;
}

// ---- clinical CSV -----------------------------------------------------------

namespace {

constexpr const char* kClinicalHeader =
    "subject_id,group,age,gender,updrs_off,updrs_on,hy,age_at_onset";

std::string optional_cell(const std::optional<double>& v) { return v ? csv::format(*v) : ""; }

}  // namespace

std::vector<ClinicalRecord> read_clinical_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const std::vector<std::string> expected = csv::split(kClinicalHeader);
  if (table.header != expected)
    throw DataError(path.string() + ": clinical header must be '" + kClinicalHeader + "'");
  std::vector<ClinicalRecord> records;
  for (const auto& row : table.rows) {
    ClinicalRecord r;
    r.subject_id = row[0];
    const std::string ctx = path.string() + " subject " + r.subject_id;
    if (row[1] == "HC") r.group = Group::HC;
    else if (row[1] == "PD") r.group = Group::PD;
    else throw DataError(ctx + ": group must be HC or PD");
    r.age = csv::parse_double(row[2], ctx);
    if (row[3] == "M") r.gender = Gender::M;
    else if (row[3] == "F") r.gender = Gender::F;
    else throw DataError(ctx + ": gender must be M or F");
    r.updrs_off = csv::parse_optional(row[4], ctx);
    r.updrs_on = csv::parse_optional(row[5], ctx);
    r.hy = csv::parse_optional(row[6], ctx);
    r.age_at_onset = csv::parse_optional(row[7], ctx);
    validate(r);
    records.push_back(std::move(r));
  }
  return records;
}

void write_clinical_csv(const std::filesystem::path& path,
                        std::span<const ClinicalRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << kClinicalHeader << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << to_string(r.group) << ',' << csv::format(r.age) << ','
        << to_string(r.gender) << ',' << optional_cell(r.updrs_off) << ','
        << optional_cell(r.updrs_on) << ',' << optional_cell(r.hy) << ','
        << optional_cell(r.age_at_onset) << '\n';
  }
}

// ---- NFVX -------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'F', 'V', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T swap_bytes(T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <typename T>
void put_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw DataError("truncated NFVX header (" + what + ")");
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  return value;
}

}  // namespace

std::filesystem::path nfvx_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".ids");
}

void write_nfvx(const std::filesystem::path& path, const VoxelFeatureMatrix& matrix) {
  if (static_cast<std::size_t>(matrix.values.cols()) != matrix.gm_width + matrix.wm_width)
    throw DataError("voxel matrix width does not equal gm_width + wm_width");
  if (matrix.subject_order.size() != matrix.rows())
    throw DataError("subject_order length does not match row count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.rows()));
  put_le<std::uint64_t>(out, matrix.gm_width);
  put_le<std::uint64_t>(out, matrix.wm_width);
  std::vector<float> row(static_cast<std::size_t>(matrix.values.cols()));
  for (Eigen::Index r = 0; r < matrix.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.values.cols(); ++c)
      row[static_cast<std::size_t>(c)] = static_cast<float>(matrix.values(r, c));
    if constexpr (std::endian::native == std::endian::big) {
      for (float& f : row) f = swap_bytes(f);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());

  std::ofstream ids(nfvx_sidecar(path));
  if (!ids) throw DataError("cannot write " + nfvx_sidecar(path).string());
  for (const auto& id : matrix.subject_order) ids << id << '\n';
}

VoxelFeatureMatrix read_nfvx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path.string() + ": not an NFVX file");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw DataError(path.string() + ": unsupported NFVX version " + std::to_string(version));
  const auto rows = get_le<std::uint32_t>(in, "rows");
  const auto gm = get_le<std::uint64_t>(in, "gm_cols");
  const auto wm = get_le<std::uint64_t>(in, "wm_cols");
  const std::uint64_t cols = gm + wm;

  VoxelFeatureMatrix m;
  m.gm_width = gm;
  m.wm_width = wm;
  m.values.resize(rows, static_cast<Eigen::Index>(cols));
  std::vector<float> row(cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(cols * sizeof(float))))
      throw DataError(path.string() + ": truncated NFVX payload at row " + std::to_string(r));
    for (std::uint64_t c = 0; c < cols; ++c) {
      float f = row[c];
      if constexpr (std::endian::native == std::endian::big)
        f = swap_bytes(f);
      m.values(r, static_cast<Eigen::Index>(c)) = f;
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(path.string() + ": trailing bytes after NFVX payload");

  std::ifstream ids(nfvx_sidecar(path));
  if (!ids) throw DataError("missing subject sidecar " + nfvx_sidecar(path).string());
  std::string line;
  while (std::getline(ids, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) m.subject_order.push_back(line);
  }
  if (m.subject_order.size() != rows)
    throw DataError(nfvx_sidecar(path).string() + ": expected " + std::to_string(rows) +
                    " subject ids, found " + std::to_string(m.subject_order.size()));
  validate(m);
  return m;
}

}  // namespace neurofuse
