#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace neurofuse::stats {

enum class TestKind { t, chi2, F, r, permutation };

std::string_view to_string(TestKind kind);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  TestKind kind = TestKind::t;
};

struct EffectSize {
  double g = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double s = 0.0;  // pooled standard deviation
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

struct FdrResult {
  std::vector<bool> reject;
  std::vector<double> adjusted;
  double q = 0.05;
};

// Descriptive helpers. `sample_sd` uses the n-1 denominator.
double mean(std::span<const double> x);
double sample_variance(std::span<const double> x);
double sample_sd(std::span<const double> x);

// Two-sided tail probabilities.
double t_two_sided_p(double t, double df);
double f_upper_p(double f, double df1, double df2);
double chi2_upper_p(double x, double df);

/// Pooled-variance two-sample t test, two-sided.
TestResult student_t(std::span<const double> a, std::span<const double> b);

/// Pooled-variance t test from group means, standard deviations and sizes.
TestResult student_t_summary(double m1, double s1, std::size_t n1,
                             double m2, double s2, std::size_t n2);

/// Pearson chi-square on a 2x2 table (no continuity correction), df = 1.
TestResult chi_square_2x2(const double (&counts)[2][2]);

/// Bias-corrected Hedges' g of a relative to b.
EffectSize hedges_g(std::span<const double> a, std::span<const double> b);

/// Benjamini-Hochberg step-up at level q.
FdrResult fdr_bh(std::span<const double> p_values, double q);

/// One-way ANOVA F test.
TestResult one_way_anova(const std::vector<std::vector<double>>& groups);

/// Pearson correlation with a two-sided t-based p-value.
TestResult pearson(std::span<const double> x, std::span<const double> y);

/// Correlation coefficient only; throws on zero variance or length mismatch.
double pearson_r(std::span<const double> x, std::span<const double> y);

enum class PermStatistic { mean_diff, t };

/// Two-sample label permutation test with add-one p-value.
///
/// Both groups are pooled in a canonical order (sorted values) before shuffling, so
/// the result does not depend on which sample is passed first. Each permutation
/// draws from its own counter-derived stream.
TestResult permutation_test(std::span<const double> a, std::span<const double> b,
                            PermStatistic statistic, std::size_t n_perm,
                            std::uint64_t seed);

}  // namespace neurofuse::stats
