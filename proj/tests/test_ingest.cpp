#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "neurofuse/error.hpp"
#include "neurofuse/ingest.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/stats.hpp"

using namespace neurofuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("neurofuse_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

VoxelFeatureMatrix random_matrix(std::uint64_t seed, int rows, int gm, int wm) {
  Rng rng = make_rng(seed, 1);
  Eigen::MatrixXd g(rows, gm), w(rows, wm);
  for (int i = 0; i < g.size(); ++i) g.data()[i] = standard_normal(rng);
  for (int i = 0; i < w.size(); ++i) w.data()[i] = standard_normal(rng);
  std::vector<std::string> ids;
  for (int r = 0; r < rows; ++r) ids.push_back("s" + std::to_string(r));
  return assemble_joint_matrix(g, w, ids);
}

}  // namespace

TEST_SUITE("ingest") {
TEST_CASE("impute_winsorized leaves complete data unchanged") {
  std::vector<std::optional<double>> v;
  for (int i = 1; i <= 20; ++i) v.emplace_back(i);
  const auto out = impute_winsorized(v, 0.05);
  for (int i = 0; i < 20; ++i) CHECK(out[i] == i + 1);
}

TEST_CASE("impute_winsorized fills with the winsorized mean") {
  // Present values 1..20, k = round(0.05 * 20) = 1: 1 -> 2 and 20 -> 19.
  // Hand oracle: (2 + (2 + ... + 19) + 19) / 20 = (2 + 189 + 19) / 20 = 10.5.
  std::vector<std::optional<double>> v;
  for (int i = 1; i <= 20; ++i) v.emplace_back(i);
  v.insert(v.begin() + 5, std::nullopt);
  const auto out = impute_winsorized(v, 0.05);
  CHECK(out.size() == 21);
  CHECK(out[5] == doctest::Approx(10.5));
  CHECK(out[0] == 1.0);
  CHECK(out[20] == 20.0);

  // A wild tail value is clamped: 1..19 plus 100 gives the same fill of 10.5.
  std::vector<std::optional<double>> w;
  for (int i = 1; i <= 19; ++i) w.emplace_back(i);
  w.emplace_back(100.0);
  w.emplace_back(std::nullopt);
  CHECK(impute_winsorized(w, 0.05).back() == doctest::Approx(10.5));
}

TEST_CASE("impute_winsorized errors") {
  std::vector<std::optional<double>> none(4, std::nullopt);
  CHECK_THROWS_WITH_AS(impute_winsorized(none, 0.05), "no data to impute", DataError);
  std::vector<std::optional<double>> some{1.0, std::nullopt};
  CHECK_THROWS_AS(impute_winsorized(some, 0.5), DataError);
  CHECK_THROWS_AS(impute_winsorized(some, -0.1), DataError);
}

TEST_CASE("impute_winsorized is idempotent") {
  Rng rng = make_rng(3, 3);
  std::vector<std::optional<double>> v;
  for (int i = 0; i < 40; ++i) {
    if (uniform01(rng) < 0.2) v.emplace_back(std::nullopt);
    else v.emplace_back(standard_normal(rng));
  }
  const auto once = impute_winsorized(v, 0.05);
  std::vector<std::optional<double>> again(once.begin(), once.end());
  CHECK(impute_winsorized(again, 0.05) == once);
}

TEST_CASE("impute_clinical only touches PD records") {
  std::vector<ClinicalRecord> recs(4);
  for (int i = 0; i < 4; ++i) {
    recs[i].subject_id = "s" + std::to_string(i);
    recs[i].age = 50 + i;
    recs[i].group = i == 0 ? Group::HC : Group::PD;
  }
  recs[1].updrs_off = 10;
  recs[2].updrs_off = 20;
  const auto out = impute_clinical(recs);
  CHECK_FALSE(out[0].updrs_off.has_value());
  CHECK(out[3].updrs_off.value() == doctest::Approx(15.0));
  CHECK_FALSE(out[3].hy.has_value());  // no PD data for hy: left missing
}

TEST_CASE("regress_covariates with intercept-only design returns input") {
  auto m = random_matrix(1, 12, 5, 4);
  const auto out = regress_covariates(m, intercept_only_design(12));
  CHECK((out.values - m.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("regress_covariates removes planted age effect and preserves means") {
  Rng rng = make_rng(2, 2);
  const int n = 40;
  std::vector<double> ages(n);
  std::vector<Gender> genders(n);
  for (int i = 0; i < n; ++i) {
    ages[i] = 30 + 40 * uniform01(rng);
    genders[i] = uniform01(rng) < 0.4 ? Gender::F : Gender::M;
  }
  auto m = random_matrix(4, n, 6, 5);
  for (int i = 0; i < n; ++i) m.values(i, 0) = 3 * ages[i] + standard_normal(rng);
  const auto design = make_covariate_design(ages, genders);
  const auto out = regress_covariates(m, design);

  for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
    std::vector<double> col(out.values.col(c).data(), out.values.col(c).data() + n);
    CHECK(std::fabs(out.values.col(c).mean() - m.values.col(c).mean()) < 1e-10);
    for (Eigen::Index k = 1; k < design.columns.cols(); ++k) {
      std::vector<double> cov(design.columns.col(k).data(), design.columns.col(k).data() + n);
      CHECK(std::fabs(stats::pearson_r(col, cov)) < 1e-8);
    }
  }
  std::vector<double> first(out.values.col(0).data(), out.values.col(0).data() + n);
  CHECK(std::fabs(stats::pearson_r(first, ages)) < 1e-10);
}

TEST_CASE("regress_covariates rejects collinear designs and row mismatch") {
  auto m = random_matrix(5, 10, 3, 3);
  CovariateDesign d;
  d.names = {"intercept", "age", "age_copy"};
  d.columns.resize(10, 3);
  for (int i = 0; i < 10; ++i) d.columns.row(i) << 1.0, 20.0 + i, 20.0 + i;
  try {
    regress_covariates(m, d);
    FAIL("expected rank error");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("collinear") != std::string::npos);
    CHECK((what.find("age") != std::string::npos));
  }
  CHECK_THROWS_AS(regress_covariates(m, intercept_only_design(9)), DataError);
}

TEST_CASE("screen_outliers") {
  Eigen::MatrixXd base(1, 8);
  base << 1, 3, 2, 5, 4, 7, 6, 8;
  Eigen::MatrixXd gm = base.replicate(10, 1).leftCols(4);
  Eigen::MatrixXd wm = base.replicate(10, 1).rightCols(4);
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
  auto same = assemble_joint_matrix(gm, wm, ids);
  const auto clean = screen_outliers(same, 3.0);
  for (const auto& e : clean.entries) {
    CHECK(e.correlation.value() == doctest::Approx(1.0));
    CHECK_FALSE(e.flagged);
  }

  auto inverted = same;
  inverted.values.row(7) *= -1.0;
  const auto report = screen_outliers(inverted, 3.0);
  CHECK(report.flagged_rows() == std::vector<std::size_t>{7});
  CHECK(report.entries[7].correlation.value() == doctest::Approx(-1.0));

  // Scale invariance of the flags.
  auto scaled = inverted;
  scaled.values *= 7.5;
  CHECK(screen_outliers(scaled, 3.0).flagged_rows() == report.flagged_rows());

  auto flat = inverted;
  flat.values.row(2).setConstant(4.0);
  const auto with_flat = screen_outliers(flat, 3.0);
  CHECK(with_flat.entries[2].status == OutlierStatus::zero_variance);
  CHECK(with_flat.entries[2].flagged);
  CHECK_FALSE(with_flat.entries[2].correlation.has_value());

  auto two = random_matrix(6, 2, 3, 3);
  CHECK_THROWS_WITH_AS(screen_outliers(two), doctest::Contains("insufficient subjects"), DataError);
}

TEST_CASE("assemble_joint_matrix") {
  Eigen::MatrixXd gm = Eigen::MatrixXd::Constant(2, 3, 1.0);
  Eigen::MatrixXd wm = Eigen::MatrixXd::Constant(2, 4, 2.0);
  const auto m = assemble_joint_matrix(gm, wm, {"b", "a"});
  CHECK(m.values.rows() == 2);
  CHECK(m.values.cols() == 7);
  CHECK(m.gm_width == 3);
  CHECK(m.wm_width == 4);
  CHECK(m.subject_order == std::vector<std::string>{"b", "a"});
  CHECK(m.values(1, 2) == 1.0);
  CHECK(m.values(1, 3) == 2.0);
  CHECK_THROWS_WITH_AS(assemble_joint_matrix(gm, Eigen::MatrixXd(2, 0), {"b", "a"}),
                       "both tissues required", DataError);
  CHECK_THROWS_AS(assemble_joint_matrix(gm, Eigen::MatrixXd::Zero(3, 4), {"b", "a"}), DataError);
}

TEST_CASE("NFVX round trip and truncation") {
  const auto dir = temp_dir("nfvx");
  auto m = random_matrix(7, 5, 3, 4);
  m.values = m.values.cast<float>().cast<double>();
  write_nfvx(dir / "x.nfvx", m);
  const auto back = read_nfvx(dir / "x.nfvx");
  CHECK(back.values == m.values);
  CHECK(back.gm_width == 3);
  CHECK(back.wm_width == 4);
  CHECK(back.subject_order == m.subject_order);

  // Header layout: 4 magic + 4 version + 4 rows + 8 + 8, then 5*7 floats.
  CHECK(fs::file_size(dir / "x.nfvx") == 28 + 5 * 7 * 4);
  std::ifstream raw(dir / "x.nfvx", std::ios::binary);
  char magic[4];
  raw.read(magic, 4);
  CHECK(std::string(magic, 4) == "NFVX");

  fs::resize_file(dir / "x.nfvx", 28 + 10);
  CHECK_THROWS_WITH_AS(read_nfvx(dir / "x.nfvx"), doctest::Contains("truncated"), DataError);
}

TEST_CASE("clinical CSV round trip keeps missing cells missing") {
  const auto dir = temp_dir("clinical");
  std::vector<ClinicalRecord> recs(2);
  recs[0] = {"hc1", Group::HC, 40.5, Gender::F, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
  recs[1] = {"pd1", Group::PD, 61, Gender::M, 32.5, 20, 2.5, 55};
  write_clinical_csv(dir / "c.csv", recs);
  const auto back = read_clinical_csv(dir / "c.csv");
  REQUIRE(back.size() == 2);
  CHECK_FALSE(back[0].updrs_off.has_value());
  CHECK(back[0].gender == Gender::F);
  CHECK(back[1].hy.value() == 2.5);
  CHECK(back[1].age_at_onset.value() == 55);

  std::ofstream bad(dir / "bad.csv");
  bad << "subject_id,group,age,gender,updrs_off,updrs_on,hy,age_at_onset\n"
      << "x,PD,50,M,,,,60\n";
  bad.close();
  CHECK_THROWS_WITH_AS(read_clinical_csv(dir / "bad.csv"), doctest::Contains("age_at_onset"), DataError);
}
}
