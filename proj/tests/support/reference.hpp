#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace reference {

// P[X <= x] for X ~ Binomial(n, p) by direct summation of the pmf.
inline long double binomial_tail(std::uint64_t x, std::uint64_t n, long double p) {
  if (p <= 0.0L) return 1.0L;
  if (p >= 1.0L) return x >= n ? 1.0L : 0.0L;
  long double total = 0.0L;
  for (std::uint64_t k = 0; k <= x && k <= n; ++k) {
    const long double log_term = std::lgamma(static_cast<long double>(n) + 1) -
                                 std::lgamma(static_cast<long double>(k) + 1) -
                                 std::lgamma(static_cast<long double>(n - k) + 1) + k * std::log(p) +
                                 (n - k) * std::log1p(-p);
    total += std::exp(log_term);
  }
  return total;
}

// Smallest p with tail(x; n, p) <= level, by bisection to machine precision.
inline double cp_upper_bisect(std::uint64_t x, std::uint64_t n, double level) {
  if (x >= n) return 1.0;
  long double lo = 0.0L, hi = 1.0L;
  for (int i = 0; i < 300; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (binomial_tail(x, n, mid) <= level)
      hi = mid;
    else
      lo = mid;
  }
  return static_cast<double>(hi);
}

// Fraction of (positive, negative) pairs ordered correctly, ties count half.
inline double auc_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double good = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        total += 1.0;
        good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return good / total;
}

// Pearson correlation of two 0/1 label vectors (the phi coefficient).
inline double phi(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Optimal k-center radius by exhaustive search over center subsets.
inline double optimal_k_center_radius(const std::vector<std::vector<double>>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(n, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), 1);
  std::sort(pick.begin(), pick.end());
  do {
    double radius = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c)
        if (pick[c]) d = std::min(d, dist(pts[i], pts[c]));
      radius = std::max(radius, d);
    }
    best = std::min(best, radius);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace reference
