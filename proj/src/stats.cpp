#include "neurofuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "neurofuse/error.hpp"
#include "neurofuse/random.hpp"

namespace neurofuse::stats {

std::string_view to_string(TestKind kind) {
  switch (kind) {
    case TestKind::t: return "t";
    case TestKind::chi2: return "chi2";
    case TestKind::F: return "F";
    case TestKind::r: return "r";
    case TestKind::permutation: return "permutation";
  }
  return "unknown";
}

double mean(std::span<const double> x) {
  if (x.empty()) throw DataError("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw DataError("variance needs at least 2 values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double sample_sd(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

static double clamp_p(double p) {
  if (!std::isfinite(p)) throw NumericalError("non-finite p-value");
  return std::clamp(p, 0.0, 1.0);
}

double t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw NumericalError("t distribution needs positive df");
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return clamp_p(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

double f_upper_p(double f, double df1, double df2) {
  if (!(df1 > 0 && df2 > 0)) throw NumericalError("F distribution needs positive df");
  if (std::isinf(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  boost::math::fisher_f dist(df1, df2);
  return clamp_p(boost::math::cdf(boost::math::complement(dist, f)));
}

double chi2_upper_p(double x, double df) {
  if (!(df > 0)) throw NumericalError("chi-square distribution needs positive df");
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared dist(df);
  return clamp_p(boost::math::cdf(boost::math::complement(dist, x)));
}

namespace {

struct Moments {
  double mean;
  double ss;  // sum of squared deviations
  std::size_t n;
};

Moments moments(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, ss, x.size()};
}

double pooled_variance(const Moments& a, const Moments& b) {
  return (a.ss + b.ss) / static_cast<double>(a.n + b.n - 2);
}

}  // namespace

TestResult student_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw DataError("student_t needs at least 2 values per group");
  const Moments ma = moments(a);
  const Moments mb = moments(b);
  const double sp2 = pooled_variance(ma, mb);
  if (!(sp2 > 0.0)) throw NumericalError("student_t: zero pooled variance");
  const double se = std::sqrt(sp2 * (1.0 / ma.n + 1.0 / mb.n));
  const double t = (ma.mean - mb.mean) / se;
  const double df = static_cast<double>(ma.n + mb.n - 2);
  return {t, t_two_sided_p(t, df), df, TestKind::t};
}

TestResult student_t_summary(double m1, double s1, std::size_t n1,
                             double m2, double s2, std::size_t n2) {
  if (n1 < 2 || n2 < 2) throw DataError("student_t_summary needs n >= 2 per group");
  if (s1 < 0.0 || s2 < 0.0) throw DataError("student_t_summary: negative standard deviation");
  const double df = static_cast<double>(n1 + n2 - 2);
  const double sp2 = ((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / df;
  if (!(sp2 > 0.0)) throw NumericalError("student_t_summary: degenerate variances");
  const double t = (m1 - m2) / std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
  return {t, t_two_sided_p(t, df), df, TestKind::t};
}

TestResult chi_square_2x2(const double (&counts)[2][2]) {
  double rows[2] = {0, 0};
  double cols[2] = {0, 0};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (counts[i][j] < 0 || !std::isfinite(counts[i][j]))
        throw DataError("chi_square_2x2: counts must be finite and non-negative");
      rows[i] += counts[i][j];
      cols[j] += counts[i][j];
    }
  }
  const double total = rows[0] + rows[1];
  if (rows[0] <= 0 || rows[1] <= 0 || cols[0] <= 0 || cols[1] <= 0)
    throw DataError("chi_square_2x2: zero marginal");
  double chi2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / total;
      const double d = counts[i][j] - expected;
      chi2 += d * d / expected;
    }
  }
  return {chi2, chi2_upper_p(chi2, 1.0), 1.0, TestKind::chi2};
}

EffectSize hedges_g(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw DataError("hedges_g needs at least 2 values per group");
  const Moments ma = moments(a);
  const Moments mb = moments(b);
  const double s = std::sqrt(pooled_variance(ma, mb));
  if (!(s > 0.0)) throw NumericalError("hedges_g: zero pooled standard deviation");
  const double n = static_cast<double>(ma.n + mb.n);
  const double correction = 1.0 - 3.0 / (4.0 * n - 9.0);
  return {(ma.mean - mb.mean) / s * correction, ma.mean, mb.mean, s, ma.n, mb.n};
}

FdrResult fdr_bh(std::span<const double> p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DataError("fdr_bh: q must lie in (0, 1)");
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("fdr_bh: p-value outside [0, 1]");
  }
  FdrResult out;
  out.q = q;
  out.reject.assign(m, false);
  out.adjusted.assign(m, 1.0);
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });

  // Largest rank k with p(k) <= k q / m, compared as p m <= k q.
  std::size_t cutoff = 0;
  for (std::size_t k = 1; k <= m; ++k) {
    if (p_values[order[k - 1]] * static_cast<double>(m) <= static_cast<double>(k) * q)
      cutoff = k;
  }
  for (std::size_t k = 0; k < cutoff; ++k) out.reject[order[k]] = true;

  double running = 1.0;
  for (std::size_t k = m; k >= 1; --k) {
    const double scaled = p_values[order[k - 1]] * static_cast<double>(m) / static_cast<double>(k);
    running = std::min(running, scaled);
    out.adjusted[order[k - 1]] = std::min(running, 1.0);
  }
  return out;
}

TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("one_way_anova needs at least 2 groups");
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw DataError("one_way_anova: every group needs at least 2 members");
    n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(n);
  double ss_between = 0.0;
  double ss_within = 0.0;
  for (const auto& g : groups) {
    const Moments mg = moments(g);
    ss_between += static_cast<double>(mg.n) * (mg.mean - grand) * (mg.mean - grand);
    ss_within += mg.ss;
  }
  const double df1 = static_cast<double>(groups.size() - 1);
  const double df2 = static_cast<double>(n - groups.size());
  if (!(ss_within > 0.0)) throw NumericalError("one_way_anova: zero within-group variance");
  const double f = (ss_between / df1) / (ss_within / df2);
  return {f, f_upper_p(f, df1, df2), df1, TestKind::F};
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: need at least 2 pairs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericalError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TestResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 3) throw DataError("pearson: need at least 3 pairs");
  const double r = pearson_r(x, y);
  const double df = static_cast<double>(x.size() - 2);
  const double denom = 1.0 - r * r;
  const double p = denom <= 0.0 ? 0.0 : t_two_sided_p(r * std::sqrt(df / denom), df);
  return {r, p, df, TestKind::r};
}

namespace {

double two_sample_statistic(std::span<const double> pooled, std::span<const std::uint8_t> in_first,
                            PermStatistic statistic) {
  double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
  std::size_t n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const double v = pooled[i];
    if (in_first[i]) {
      s1 += v;
      q1 += v * v;
      ++n1;
    } else {
      s2 += v;
      q2 += v * v;
      ++n2;
    }
  }
  const double m1 = s1 / n1;
  const double m2 = s2 / n2;
  const double diff = m1 - m2;
  if (statistic == PermStatistic::mean_diff) return diff;
  const double ss = std::max(0.0, q1 - n1 * m1 * m1) + std::max(0.0, q2 - n2 * m2 * m2);
  const double df = static_cast<double>(n1 + n2) - 2.0;
  const double sp2 = df > 0 ? ss / df : 0.0;
  if (!(sp2 > 0.0)) {
    if (diff == 0.0) return 0.0;
    return diff > 0 ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
  }
  return diff / std::sqrt(sp2 * (1.0 / n1 + 1.0 / n2));
}

}  // namespace

TestResult permutation_test(std::span<const double> a, std::span<const double> b,
                            PermStatistic statistic, std::size_t n_perm,
                            std::uint64_t seed) {
  if (a.empty() || b.empty()) throw DataError("permutation_test: empty group");
  if (n_perm < 1) throw DataError("permutation_test: n_perm must be >= 1");

  std::vector<double> first(a.begin(), a.end());
  std::vector<double> second(b.begin(), b.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  // Canonical group order: smaller group first, ties broken by sorted contents.
  if (second.size() < first.size() || (second.size() == first.size() && second < first))
    std::swap(first, second);

  std::vector<double> pooled(first);
  pooled.insert(pooled.end(), second.begin(), second.end());
  std::vector<std::uint8_t> labels(pooled.size(), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(first.size()), 1);

  const double observed = std::fabs(two_sample_statistic(pooled, labels, statistic));
  const double slack = 1e-12 * std::max(1.0, observed);

  std::size_t extreme = 0;
  std::vector<std::uint8_t> shuffled(labels.size());
  for (std::size_t k = 0; k < n_perm; ++k) {
    Rng rng = make_rng(seed, 0x7065726dULL, k);
    shuffled = labels;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
      std::swap(shuffled[i - 1], shuffled[j]);
    }
    const double value = std::fabs(two_sample_statistic(pooled, shuffled, statistic));
    if (value >= observed - slack) ++extreme;
  }
  const double p = static_cast<double>(1 + extreme) / static_cast<double>(n_perm + 1);
  // Report the statistic oriented as a relative to b.
  std::vector<double> ab(a.begin(), a.end());
  ab.insert(ab.end(), b.begin(), b.end());
  std::vector<std::uint8_t> in_a(ab.size(), 0);
  std::fill(in_a.begin(), in_a.begin() + static_cast<std::ptrdiff_t>(a.size()), 1);
  const double signed_observed = two_sample_statistic(ab, in_a, statistic);
  return {signed_observed, p, static_cast<double>(n_perm), TestKind::permutation};
}

}  // namespace neurofuse::stats
