#pragma once

// Paired alert-vs-fatigued statistics: Student's t (two-tailed), Cohen's d_z,
// 95% confidence intervals of the mean difference and Benjamini-Hochberg
// adjustment across the whole (band, channel) family.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "earmark/errors.hpp"

namespace earmark {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail(ErrorKind::degenerate, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) fail(ErrorKind::parameter, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::parameter, "incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-tailed P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) fail(ErrorKind::parameter, "degrees of freedom must be positive");
  if (std::isnan(t)) fail(ErrorKind::parameter, "t is NaN");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

inline double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_tailed(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

/// Quantile of Student's t for probability q in (0, 1), by bracketed bisection
/// on the CDF.
inline double student_t_quantile(double q, double df) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::parameter, "quantile probability must lie in (0, 1)");
  if (q == 0.5) return 0.0;
  const bool upper = q > 0.5;
  const double tail = upper ? 1.0 - q : q;  // P(T > t*) for the positive root
  double lo = 0.0, hi = 1.0;
  while (0.5 * student_t_two_tailed(hi, df) > tail) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * student_t_two_tailed(mid, df) > tail) lo = mid; else hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  return upper ? t : -t;
}

struct PairedSample {
  std::vector<std::string> subject_ids;
  std::vector<double> alert_values;
  std::vector<double> fatigued_values;
};

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

namespace detail {

struct DiffSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample sd, n - 1
  std::size_t n = 0;
  bool all_zero = false;
};

// Differences are fatigued - alert. All-zero differences are a valid
// "no change" sample (t = 0, p = 1); constant non-zero ones are degenerate.
inline DiffSummary summarize(const PairedSample& s) {
  const std::size_t n = s.alert_values.size();
  if (n != s.fatigued_values.size()) fail(ErrorKind::parameter, "paired sample arrays differ in length");
  if (n < 2) fail(ErrorKind::parameter, "paired sample needs n >= 2");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s.alert_values[i]) || !std::isfinite(s.fatigued_values[i])) {
      fail(ErrorKind::data, "non-finite paired value");
    }
    d[i] = s.fatigued_values[i] - s.alert_values[i];
  }
  DiffSummary out;
  out.n = n;
  out.all_zero = std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
  if (out.all_zero) return out;
  out.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(out.sd > 0.0)) fail(ErrorKind::degenerate, "paired differences have zero variance");
  return out;
}

}  // namespace detail

inline TTestResult paired_t(const PairedSample& s) {
  const auto d = detail::summarize(s);
  const int df = static_cast<int>(d.n) - 1;
  if (d.all_zero) return {0.0, 1.0, df};
  const double t = d.mean / (d.sd / std::sqrt(static_cast<double>(d.n)));
  return {t, student_t_two_tailed(t, df), df};
}

/// Paired d_z = mean(diff) / sd(diff); equals t / sqrt(n).
inline double cohens_d(const PairedSample& s) {
  const auto d = detail::summarize(s);
  return d.all_zero ? 0.0 : d.mean / d.sd;
}

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

inline ConfidenceInterval ci95(const PairedSample& s) {
  const auto d = detail::summarize(s);
  if (d.all_zero) return {0.0, 0.0};
  const double half = student_t_quantile(0.975, static_cast<double>(d.n - 1)) * d.sd / std::sqrt(static_cast<double>(d.n));
  return {d.mean - half, d.mean + half};
}

/// Benjamini-Hochberg step-up adjusted p-values, returned in input order.
inline std::vector<double> fdr_adjust(std::span<const double> p_raw) {
  for (double p : p_raw) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::parameter, "p-values must lie in [0, 1]");
  }
  const std::size_t m = p_raw.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_raw[a] < p_raw[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double v = static_cast<double>(m) * p_raw[order[r]] / static_cast<double>(r + 1);
    running = std::min(running, v);
    adj[order[r]] = running;
  }
  return adj;
}

inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

struct StatRow {
  std::string band;
  std::string channel;
  double d = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double t = 0.0;
  double p_raw = 1.0;
  double p_adj = 1.0;
  std::size_t n = 0;

  std::string stars() const { return significance_stars(p_adj); }
  bool significant(double alpha = 0.05) const { return p_adj < alpha; }
};

struct StatTable {
  std::vector<StatRow> rows;  // band-major, channels in requested order

  const StatRow& at(const std::string& band, const std::string& channel) const {
    for (const auto& r : rows) {
      if (r.band == band && r.channel == channel) return r;
    }
    fail(ErrorKind::completeness, "no stat row for " + band + "/" + channel);
  }
};

/// Per-subject phase means of one (channel, band) cell.
struct SubjectBandPower {
  std::string subject;
  std::string channel;
  std::string band;
  double alert = 0.0;
  double fatigued = 0.0;
};

/// One paired test per (band, channel); BH adjustment runs jointly over all cells.
inline StatTable build_stat_table(std::span<const SubjectBandPower> powers, const std::vector<std::string>& bands,
                                  const std::vector<std::string>& channels) {
  std::map<std::string, std::map<std::pair<std::string, std::string>, const SubjectBandPower*>> by_subject;
  for (const auto& p : powers) by_subject[p.subject][{p.channel, p.band}] = &p;
  if (by_subject.size() < 2) fail(ErrorKind::completeness, "statistics need at least two subjects");

  StatTable table;
  std::vector<double> p_raw;
  for (const auto& band : bands) {
    for (const auto& channel : channels) {
      PairedSample sample;
      for (const auto& [subject, cells] : by_subject) {
        const auto it = cells.find({channel, band});
        if (it == cells.end()) fail(ErrorKind::completeness, "subject " + subject + " lacks " + channel + "/" + band);
        sample.subject_ids.push_back(subject);
        sample.alert_values.push_back(it->second->alert);
        sample.fatigued_values.push_back(it->second->fatigued);
      }
      const auto tt = paired_t(sample);
      const auto ci = ci95(sample);
      table.rows.push_back({band, channel, cohens_d(sample), ci.lo, ci.hi, tt.t, tt.p, 1.0, sample.alert_values.size()});
      p_raw.push_back(tt.p);
    }
  }
  const auto adj = fdr_adjust(p_raw);
  for (std::size_t i = 0; i < adj.size(); ++i) table.rows[i].p_adj = adj[i];
  return table;
}

}  // namespace earmark
