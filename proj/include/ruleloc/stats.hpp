#pragma once

// Exact binomial confidence bounds, per-feature scores, feature filters and
// the Matthews correlation coefficient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ruleloc/core.hpp"
#include "ruleloc/error.hpp"

namespace ruleloc {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
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
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, ErrorCode::InvalidArgument, "regularized_beta needs positive shape parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P[X <= x] for X ~ Binomial(n, p), via I_{1-p}(n - x, x + 1).
inline double binomial_cdf(std::uint64_t x, std::uint64_t n, double p) {
  if (x >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  return regularized_beta(static_cast<double>(n - x), static_cast<double>(x) + 1.0, 1.0 - p);
}

// One-sided Clopper-Pearson upper bound: the smallest p with
// P[X <= x; n, p] <= level, found by bisection on the exact tail.
inline double cp_upper(std::uint64_t x, std::uint64_t n, double level) {
  require(n > 0, ErrorCode::InvalidArgument, "cp_upper needs n > 0");
  require(x <= n, ErrorCode::InvalidArgument, "cp_upper needs x <= n");
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "cp_upper level must lie in (0, 1)");
  if (x == n) return 1.0;
  if (x == 0) return -std::expm1(std::log(level) / static_cast<double>(n));
  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (binomial_cdf(x, n, mid) <= level)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// One-sided lower bound, by symmetry of the binomial in successes/failures.
inline double cp_lower(std::uint64_t x, std::uint64_t n, double level) {
  require(x <= n, ErrorCode::InvalidArgument, "cp_lower needs x <= n");
  if (x == 0) return 0.0;
  return 1.0 - cp_upper(n - x, n, level);
}

// Slice effects with each slice's upper bound taken at level alpha / 2.
inline GroupEffect measure_effect(std::uint32_t flips_plus, std::uint32_t n_plus, std::uint32_t flips_minus,
                                  std::uint32_t n_minus, double alpha) {
  require(n_plus > 0 && n_minus > 0, ErrorCode::InvalidArgument, "group effects need samples on both slices");
  GroupEffect e;
  e.flips_plus = flips_plus;
  e.flips_minus = flips_minus;
  e.n_plus = n_plus;
  e.n_minus = n_minus;
  e.delta_plus = static_cast<double>(flips_plus) / n_plus;
  e.delta_minus = static_cast<double>(flips_minus) / n_minus;
  e.ucb_plus = cp_upper(flips_plus, n_plus, alpha / 2.0);
  e.ucb_minus = cp_upper(flips_minus, n_minus, alpha / 2.0);
  return e;
}

// U_E(A) = max(u+, u-) recomputed from the stored counts.
inline double group_ucb(const GroupEffect& effect, double alpha) {
  require(effect.n_plus > 0 && effect.n_minus > 0, ErrorCode::InvalidArgument,
          "group_ucb needs samples on both slices");
  return std::max(cp_upper(effect.flips_plus, effect.n_plus, alpha / 2.0),
                  cp_upper(effect.flips_minus, effect.n_minus, alpha / 2.0));
}

// Matching lower bound on strength (max over slices of the lower bounds).
inline double group_lcb(const GroupEffect& effect, double alpha) {
  require(effect.n_plus > 0 && effect.n_minus > 0, ErrorCode::InvalidArgument,
          "group_lcb needs samples on both slices");
  return std::max(cp_lower(effect.flips_plus, effect.n_plus, alpha / 2.0),
                  cp_lower(effect.flips_minus, effect.n_minus, alpha / 2.0));
}

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  require(predicted.size() == truth.size(), ErrorCode::InvalidArgument, "prediction/label length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

// Zero under the root gives 0.
inline double mcc(const ConfusionCounts& c) {
  require(c.total() > 0, ErrorCode::InvalidArgument, "mcc needs at least one counted example");
  const double tp = static_cast<double>(c.tp);
  const double tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

// Average ranks (1-based) with midranks for ties.
inline std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline void check_binary_scoring_inputs(std::span<const double> column, std::span<const std::uint8_t> labels) {
  require(column.size() == labels.size(), ErrorCode::InvalidArgument, "column/label length mismatch");
  require(column.size() >= 2, ErrorCode::InvalidArgument, "scoring needs at least two examples");
  const auto positives = std::count_if(labels.begin(), labels.end(), [](auto y) { return y != 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == labels.size())
    fail(ErrorCode::UndefinedScore, "scores are undefined for single-class labels");
}

}  // namespace detail

inline double auc(std::span<const double> column, std::span<const std::uint8_t> labels) {
  detail::check_binary_scoring_inputs(column, labels);
  const auto ranks = midranks(column);
  double rank_sum = 0.0;
  double n1 = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      rank_sum += ranks[i];
      n1 += 1.0;
    }
  }
  const double n0 = static_cast<double>(labels.size()) - n1;
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

// Step-wise average precision over distinct score thresholds.
inline double average_precision(std::span<const double> column, std::span<const std::uint8_t> labels) {
  detail::check_binary_scoring_inputs(column, labels);
  std::vector<std::size_t> order(column.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return column[a] > column[b]; });
  const double positives =
      static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto y) { return y != 0; }));
  double tp = 0.0;
  double fp = 0.0;
  double prev_recall = 0.0;
  double ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && column[order[j]] == column[order[i]]) {
      if (labels[order[j]] != 0) tp += 1.0;
      else fp += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

inline constexpr double kStdGapFloor = 1e-12;

// (mean1 - mean0) / (sqrt((var1 + var0) / 2) + 1e-12), population variances.
inline double standardized_gap(std::span<const double> column, std::span<const std::uint8_t> labels) {
  detail::check_binary_scoring_inputs(column, labels);
  double s[2] = {0.0, 0.0};
  double n[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < column.size(); ++i) {
    s[labels[i] != 0] += column[i];
    n[labels[i] != 0] += 1.0;
  }
  const double mean[2] = {s[0] / n[0], s[1] / n[1]};
  double ss[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < column.size(); ++i) {
    const int g = labels[i] != 0;
    ss[g] += (column[i] - mean[g]) * (column[i] - mean[g]);
  }
  const double sigma = std::sqrt(0.5 * (ss[1] / n[1] + ss[0] / n[0])) + kStdGapFloor;
  return (mean[1] - mean[0]) / sigma;
}

struct FeatureScore {
  double auc = 0.5;
  double auc_sym = 0.5;
  double ap_above_base = 0.0;
  double std_gap = 0.0;
};

inline FeatureScore feature_scores(std::span<const double> column, std::span<const std::uint8_t> labels) {
  FeatureScore s;
  s.auc = auc(column, labels);
  s.auc_sym = std::max(s.auc, 1.0 - s.auc);
  const double base = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto y) { return y != 0; })) /
                      static_cast<double>(labels.size());
  s.ap_above_base = average_precision(column, labels) - base;
  s.std_gap = standardized_gap(column, labels);
  return s;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::InvalidArgument, "pearson needs equal nonempty vectors");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Linear-interpolation quantile of a sample (q in [0, 1]).
inline double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::EmptyInput, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

struct FilterThresholds {
  double min_auc = 0.6;
  double min_delta = 0.5;
  double min_ap_above_base = 0.05;
  std::optional<double> max_abs_correlation;  // near-duplicate cutoff
  std::optional<double> max_mad_z;            // variance outlier cutoff
};

struct FeatureFilterReport {
  std::vector<FeatureScore> scores;
  std::vector<bool> retained;
  std::vector<std::string> drop_reason;  // empty when retained
  std::vector<std::size_t> retained_ids;
  // Fixed stage order, recorded so runs can echo it.
  static constexpr const char* kStageOrder = "scores>duplicates>outliers";
};

// Keep a column iff it passes any score test, then drop near-duplicates
// (later index loses), then drop variance outliers by MAD z-score.
inline FeatureFilterReport filter_features(const std::vector<std::vector<double>>& columns,
                                           std::span<const std::uint8_t> labels, const FilterThresholds& th) {
  FeatureFilterReport rep;
  const std::size_t p = columns.size();
  rep.scores.resize(p);
  rep.retained.assign(p, false);
  rep.drop_reason.assign(p, "");
  for (std::size_t j = 0; j < p; ++j) {
    rep.scores[j] = feature_scores(columns[j], labels);
    const auto& s = rep.scores[j];
    const bool pass = s.auc_sym >= th.min_auc || std::abs(s.std_gap) >= th.min_delta ||
                      s.ap_above_base >= th.min_ap_above_base;
    rep.retained[j] = pass;
    if (!pass) rep.drop_reason[j] = "low-signal";
  }
  if (th.max_abs_correlation) {
    for (std::size_t j = 0; j < p; ++j) {
      if (!rep.retained[j]) continue;
      for (std::size_t i = 0; i < j; ++i) {
        if (!rep.retained[i]) continue;
        if (std::abs(pearson(columns[i], columns[j])) >= *th.max_abs_correlation) {
          rep.retained[j] = false;
          rep.drop_reason[j] = "duplicate-of:" + std::to_string(i);
          break;
        }
      }
    }
  }
  if (th.max_mad_z) {
    std::vector<std::size_t> alive;
    std::vector<double> variances;
    for (std::size_t j = 0; j < p; ++j) {
      if (!rep.retained[j]) continue;
      const auto& c = columns[j];
      const double m = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
      double v = 0.0;
      for (double x : c) v += (x - m) * (x - m);
      alive.push_back(j);
      variances.push_back(v / static_cast<double>(c.size()));
    }
    if (alive.size() >= 3) {
      const double med = median(variances);
      std::vector<double> dev;
      for (double v : variances) dev.push_back(std::abs(v - med));
      const double mad = median(dev);
      if (mad > 0.0) {
        for (std::size_t k = 0; k < alive.size(); ++k) {
          const double z = 0.6745 * (variances[k] - med) / mad;
          if (z > *th.max_mad_z) {
            rep.retained[alive[k]] = false;
            rep.drop_reason[alive[k]] = "mad-outlier";
          }
        }
      }
    }
  }
  for (std::size_t j = 0; j < p; ++j)
    if (rep.retained[j]) rep.retained_ids.push_back(j);
  return rep;
}

inline void write_feature_scores_csv(std::ostream& out, const std::vector<std::string>& feature_ids,
                                     const FeatureFilterReport& rep) {
  out << "feature_id,auc,auc_sym,ap_above_base,std_gap,retained,drop_reason\n";
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    const auto& s = rep.scores[j];
    out << feature_ids[j] << ',' << s.auc << ',' << s.auc_sym << ',' << s.ap_above_base << ',' << s.std_gap << ','
        << (rep.retained[j] ? 1 : 0) << ',' << rep.drop_reason[j] << '\n';
  }
}

// U statistic for "a tends to exceed b" (ties count one half).
inline double mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

}  // namespace ruleloc
