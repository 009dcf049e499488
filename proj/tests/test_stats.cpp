#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "neurofuse/error.hpp"
#include "neurofuse/random.hpp"
#include "neurofuse/stats.hpp"

using namespace neurofuse;
using namespace neurofuse::stats;

namespace {

std::vector<double> gaussian_sample(Rng& rng, std::size_t n, double mu, double sd) {
  std::vector<double> x(n);
  for (auto& v : x) v = mu + sd * standard_normal(rng);
  return x;
}

// Textbook pooled-variance t written from scratch in long double.
long double textbook_t(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= a.size();
  mb /= b.size();
  long double va = 0, vb = 0;
  for (double v : a) va += (v - ma) * (v - ma);
  for (double v : b) vb += (v - mb) * (v - mb);
  va /= (a.size() - 1);
  vb /= (b.size() - 1);
  const long double sp2 = ((a.size() - 1) * va + (b.size() - 1) * vb) / (a.size() + b.size() - 2);
  return (ma - mb) / std::sqrt(sp2 * (1.0L / a.size() + 1.0L / b.size()));
}

long double textbook_g(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (double v : a) ma += v;
  for (double v : b) mb += v;
  ma /= a.size();
  mb /= b.size();
  long double ssa = 0, ssb = 0;
  for (double v : a) ssa += (v - ma) * (v - ma);
  for (double v : b) ssb += (v - mb) * (v - mb);
  const long double n = a.size() + b.size();
  const long double s = std::sqrt((ssa + ssb) / (n - 2));
  return (ma - mb) / s * (1 - 3 / (4 * n - 9));
}

// Brute-force BH: largest rank i whose i-th smallest p is <= i q / m.
std::vector<bool> bh_oracle(const std::vector<double>& p, double q) {
  const std::size_t m = p.size();
  std::vector<bool> reject(m, false);
  for (std::size_t i = m; i >= 1; --i) {
    // count hypotheses with p <= the i-th smallest
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[i - 1] * m <= i * q) {
      for (std::size_t j = 0; j < m; ++j) reject[j] = p[j] <= sorted[i - 1];
      return reject;
    }
  }
  return reject;
}

}  // namespace

TEST_SUITE("stats") {
TEST_CASE("student_t identical samples gives t=0, p=1") {
  std::vector<double> a{1, 2, 3, 4, 5};
  const auto r = student_t(a, a);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.df == 8);
}

TEST_CASE("student_t matches textbook formula and is antisymmetric") {
  Rng rng = make_rng(11, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = gaussian_sample(rng, 5 + trial % 7, 0.3 * trial, 1.0 + 0.1 * trial);
    auto b = gaussian_sample(rng, 4 + trial % 5, 0.0, 2.0);
    const auto ab = student_t(a, b);
    const auto ba = student_t(b, a);
    CHECK(std::fabs(ab.statistic - static_cast<double>(textbook_t(a, b))) < 1e-12 * std::max(1.0, std::fabs(ab.statistic)));
    CHECK(ab.statistic == doctest::Approx(-ba.statistic));
    CHECK(ab.p_value == doctest::Approx(ba.p_value));
  }
}

TEST_CASE("student_t rejects degenerate input") {
  std::vector<double> one{1.0};
  std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(student_t(one, two), DataError);
  std::vector<double> flat{3.0, 3.0, 3.0};
  CHECK_THROWS_AS(student_t(flat, flat), NumericalError);
}

TEST_CASE("student_t_summary reproduces the age comparison") {
  const auto r = student_t_summary(49.24, 10.99, 70, 54.84, 9.78, 180);
  CHECK(std::fabs(r.statistic - (-3.92)) <= 0.01);
  CHECK(std::fabs(r.p_value - 1.15e-4) <= 5e-6);
  CHECK(r.df == 248);
  CHECK(student_t_summary(5, 1, 10, 5, 2, 12).statistic == 0.0);
  CHECK_THROWS(student_t_summary(1, 0, 5, 2, 0, 5));
}

TEST_CASE("student_t_summary agrees with raw-data student_t") {
  Rng rng = make_rng(12, 1);
  auto a = gaussian_sample(rng, 17, 2.0, 1.5);
  auto b = gaussian_sample(rng, 23, 1.0, 0.7);
  const auto raw = student_t(a, b);
  const auto summary = student_t_summary(mean(a), sample_sd(a), a.size(), mean(b), sample_sd(b), b.size());
  CHECK(summary.statistic == doctest::Approx(raw.statistic).epsilon(1e-12));
  CHECK(summary.p_value == doctest::Approx(raw.p_value).epsilon(1e-10));
}

TEST_CASE("chi_square_2x2 reproduces the gender comparison") {
  const double table[2][2] = {{52, 18}, {135, 45}};
  const auto r = chi_square_2x2(table);
  CHECK(std::fabs(r.statistic - 0.0136) <= 0.0005);
  CHECK(std::fabs(r.p_value - 0.907) <= 0.005);
  CHECK(r.df == 1);

  const double proportional[2][2] = {{10, 20}, {30, 60}};
  CHECK(chi_square_2x2(proportional).statistic == doctest::Approx(0.0));

  const double zero_margin[2][2] = {{0, 0}, {3, 4}};
  CHECK_THROWS_AS(chi_square_2x2(zero_margin), DataError);
}

TEST_CASE("chi_square_2x2 matches sum of (O-E)^2/E on random tables") {
  Rng rng = make_rng(13, 1);
  for (int trial = 0; trial < 100; ++trial) {
    double t[2][2];
    for (auto& row : t)
      for (double& c : row) c = 1 + static_cast<double>(uniform_index(rng, 60));
    const double n = t[0][0] + t[0][1] + t[1][0] + t[1][1];
    double oracle = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double e = (t[i][0] + t[i][1]) * (t[0][j] + t[1][j]) / n;
        oracle += (t[i][j] - e) * (t[i][j] - e) / e;
      }
    CHECK(chi_square_2x2(t).statistic == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("hedges_g plug-in and oracle") {
  // Means 1 and 0, pooled sd 1: both groups {-1, -.5, 0, .5, 1} scaled to unit variance.
  std::vector<double> base{-2, -1, 0, 1, 2};
  const double sd = std::sqrt(10.0 / 4.0);
  std::vector<double> a, b;
  for (double v : base) {
    a.push_back(1.0 + v / sd);
    b.push_back(v / sd);
  }
  const auto g = hedges_g(a, b);
  CHECK(std::fabs(g.g - 28.0 / 31.0) < 1e-12);
  CHECK(hedges_g(b, b).g == 0.0);

  Rng rng = make_rng(14, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = gaussian_sample(rng, 6 + trial, 0.5, 1.2);
    auto y = gaussian_sample(rng, 9, -0.2, 0.8);
    CHECK(std::fabs(hedges_g(x, y).g - static_cast<double>(textbook_g(x, y))) < 1e-12);
  }
}

TEST_CASE("hedges_g shift invariance and sign equivariance") {
  Rng rng = make_rng(15, 1);
  auto x = gaussian_sample(rng, 20, 1.0, 1.0);
  auto y = gaussian_sample(rng, 25, 0.0, 1.0);
  const double g = hedges_g(x, y).g;
  auto xs = x, ys = y, xn = x, yn = y;
  for (auto& v : xs) v += 100.0;
  for (auto& v : ys) v += 100.0;
  for (auto& v : xn) v = -v;
  for (auto& v : yn) v = -v;
  CHECK(hedges_g(xs, ys).g == doctest::Approx(g).epsilon(1e-10));
  CHECK(hedges_g(xn, yn).g == doctest::Approx(-g).epsilon(1e-12));
  std::vector<double> flat{1, 1, 1};
  CHECK_THROWS(hedges_g(flat, flat));
}

TEST_CASE("fdr_bh step-up examples") {
  std::vector<double> ones(5, 1.0);
  auto none = fdr_bh(ones, 0.05);
  CHECK(std::none_of(none.reject.begin(), none.reject.end(), [](bool b) { return b; }));

  std::vector<double> single{0.01};
  CHECK(fdr_bh(single, 0.05).reject[0]);

  std::vector<double> p{0.01, 0.02, 0.04, 0.20, 0.50};
  const auto r = fdr_bh(p, 0.05);
  CHECK(r.reject == bh_oracle(p, 0.05));
  CHECK(r.reject == std::vector<bool>{true, true, false, false, false});
  CHECK(r.adjusted[0] == doctest::Approx(0.05));
  CHECK(r.adjusted[2] == doctest::Approx(0.2 / 3.0));

  std::vector<double> bad{0.5, 1.5};
  CHECK_THROWS_AS(fdr_bh(bad, 0.05), DataError);
}

TEST_CASE("fdr_bh matches brute force and is monotone in q") {
  Rng rng = make_rng(16, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 20);
    std::vector<double> p(m);
    for (auto& v : p) v = std::pow(uniform01(rng), 3.0);
    const double q1 = 0.01 + 0.1 * uniform01(rng);
    const double q2 = q1 + 0.1 * uniform01(rng);
    const auto r1 = fdr_bh(p, q1);
    const auto r2 = fdr_bh(p, q2);
    CHECK(r1.reject == bh_oracle(p, q1));
    for (std::size_t i = 0; i < m; ++i) {
      if (r1.reject[i]) CHECK(r2.reject[i]);
      CHECK(r1.reject[i] == (r1.adjusted[i] <= q1));
    }
    // adjusted p is monotone in raw-p order
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t k = 1; k < m; ++k) CHECK(r1.adjusted[order[k]] >= r1.adjusted[order[k - 1]]);
  }
}

TEST_CASE("one_way_anova") {
  std::vector<std::vector<double>> equal{{1, 2, 3}, {0, 2, 4}, {2, 2.5, 1.5}};
  const auto r = one_way_anova(equal);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK_THROWS_AS(one_way_anova({{1, 2, 3}}), DataError);

  Rng rng = make_rng(17, 1);
  for (int trial = 0; trial < 30; ++trial) {
    auto a = gaussian_sample(rng, 8, 0.4, 1.0);
    auto b = gaussian_sample(rng, 11, 0.0, 1.0);
    const double t = student_t(a, b).statistic;
    const auto f = one_way_anova({a, b});
    CHECK(std::fabs(f.statistic - t * t) < 1e-10 * std::max(1.0, t * t));
    CHECK(f.p_value == doctest::Approx(student_t(a, b).p_value).epsilon(1e-9));
  }
}

TEST_CASE("pearson") {
  std::vector<double> x{1, 2, 3, 4, 5, 6};
  std::vector<double> y, z;
  for (double v : x) {
    y.push_back(2 * v + 1);
    z.push_back(-v);
  }
  CHECK(pearson(x, y).statistic == doctest::Approx(1.0));
  CHECK(pearson(x, z).statistic == doctest::Approx(-1.0));
  CHECK(pearson(x, y).p_value == doctest::Approx(0.0));

  Rng rng = make_rng(18, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = gaussian_sample(rng, 10, 0, 1);
    auto b = gaussian_sample(rng, 10, 0, 1);
    for (std::size_t i = 0; i < a.size(); ++i) b[i] += 0.5 * a[i];
    // covariance-definition oracle
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    long double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      cov += (a[i] - ma) * (b[i] - mb);
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(std::fabs(pearson(a, b).statistic - static_cast<double>(cov / std::sqrt(va * vb))) < 1e-12);
  }

  std::vector<double> flat{1, 1, 1, 1};
  std::vector<double> four{1, 2, 3, 4};
  CHECK_THROWS_AS(pearson(flat, four), NumericalError);
  std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(pearson(three, four), DataError);
}

TEST_CASE("permutation_test conventions") {
  std::vector<double> a{10, 11, 12, 13, 14, 15};
  std::vector<double> b{0, 1, 2, 3, 4, 5};
  // Fully separated groups: only the identity split (and its mirror) reach the observed
  // statistic, so with few permutations the add-one floor is typically hit.
  const auto r = permutation_test(a, b, PermStatistic::mean_diff, 50, 3);
  CHECK(r.p_value == doctest::Approx(1.0 / 51.0));
  CHECK(r.statistic == doctest::Approx(10.0));

  const auto r2 = permutation_test(a, b, PermStatistic::t, 200, 99);
  const auto r3 = permutation_test(a, b, PermStatistic::t, 200, 99);
  CHECK(r2.p_value == r3.p_value);
  const auto swapped = permutation_test(b, a, PermStatistic::t, 200, 99);
  CHECK(swapped.p_value == r2.p_value);
  CHECK(swapped.statistic == doctest::Approx(-r2.statistic));

  const auto same = permutation_test(a, a, PermStatistic::mean_diff, 100, 1);
  CHECK(same.p_value == doctest::Approx(1.0));

  std::vector<double> empty;
  CHECK_THROWS_AS(permutation_test(a, empty, PermStatistic::t, 10, 1), DataError);
  CHECK_THROWS_AS(permutation_test(a, b, PermStatistic::t, 0, 1), DataError);
}

TEST_CASE("permutation_test calibration under the null") {
  Rng rng = make_rng(19, 1);
  int rejections = 0;
  const int runs = 200;
  for (int run = 0; run < runs; ++run) {
    auto a = gaussian_sample(rng, 15, 0, 1);
    auto b = gaussian_sample(rng, 15, 0, 1);
    if (permutation_test(a, b, PermStatistic::t, 199, 1000 + run).p_value <= 0.05) ++rejections;
  }
  const double fraction = static_cast<double>(rejections) / runs;
  CHECK(fraction >= 0.01);
  CHECK(fraction <= 0.10);
}
}
