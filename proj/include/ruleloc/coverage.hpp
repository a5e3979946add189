#pragma once

// Spectral compression and representative sampling of evaluation examples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/core.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/localizer.hpp"
#include "ruleloc/random.hpp"
#include "ruleloc/stats.hpp"

namespace ruleloc {

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    require(!rows_in.empty(), ErrorCode::EmptyInput, "matrix needs at least one row");
    DenseMatrix m(rows_in.size(), rows_in.front().size());
    for (std::size_t r = 0; r < m.rows; ++r) {
      require(rows_in[r].size() == m.cols, ErrorCode::InvalidArgument, "ragged matrix rows");
      for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows_in[r][c];
    }
    return m;
  }
};

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct PcaResult {
  DenseMatrix projected;  // centered scores, before row normalization
  DenseMatrix embedded;   // unit-norm rows
  DenseMatrix components;  // d_pca x d_e, orthonormal rows
  std::vector<double> mean;
  std::vector<double> eigenvalues;
  std::vector<double> explained_variance_ratio;
  std::size_t effective_rank = 0;
  std::optional<std::string> warning;
};

// Top principal directions by power iteration with deflation on the
// covariance matrix.
inline PcaResult pca_embed(const DenseMatrix& x, std::size_t d_pca) {
  const std::size_t n = x.rows, d = x.cols;
  require(n >= 2, ErrorCode::InvalidArgument, "pca needs at least two rows");
  require(d_pca >= 1 && d_pca <= std::min(n, d), ErrorCode::InvalidArgument, "d_pca must lie in [1, min(n, d)]");
  for (double v : x.data) require(std::isfinite(v), ErrorCode::InvalidArgument, "embedding entries must be finite");

  PcaResult res;
  res.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) res.mean[c] += x(r, c);
  for (double& m : res.mean) m /= static_cast<double>(n);
  DenseMatrix centered(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = x(r, c) - res.mean[c];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = centered(r, i);
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += xi * centered(r, j);
    }
  for (double& v : cov) v /= static_cast<double>(n);
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov[i * d + i];

  res.components = DenseMatrix(d_pca, d);
  Rng rng(0x5eed);
  std::vector<double> v(d), w(d);
  auto orthogonalize = [&](std::vector<double>& vec, std::size_t k) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t p = 0; p < k; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += vec[i] * res.components(p, i);
        for (std::size_t i = 0; i < d; ++i) vec[i] -= dot * res.components(p, i);
      }
  };
  auto normalize = [&](std::vector<double>& vec) {
    double norm = 0.0;
    for (double e : vec) norm += e * e;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& e : vec) e /= norm;
    return norm;
  };
  const double floor = 1e-12 * std::max(trace, 1e-300);
  for (std::size_t k = 0; k < d_pca; ++k) {
    for (double& e : v) e = rng.normal();
    orthogonalize(v, k);
    normalize(v);
    double lambda = 0.0;
    for (int iter = 0; iter < 20000; ++iter) {
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
        w[i] = s;
      }
      orthogonalize(w, k);
      lambda = normalize(w);
      double change = 0.0;
      for (std::size_t i = 0; i < d; ++i) change = std::max(change, std::abs(w[i] - v[i]));
      v.swap(w);
      if (lambda <= floor || change < 1e-14) break;
    }
    if (lambda <= floor) break;
    // Rayleigh quotient for the eigenvalue, then deflate.
    double rq = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) rq += v[i] * cov[i * d + j] * v[j];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(v[i]) > std::abs(v[arg]) + 1e-15) arg = i;
    if (v[arg] < 0.0)
      for (double& e : v) e = -e;
    for (std::size_t i = 0; i < d; ++i) res.components(k, i) = v[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] -= rq * v[i] * v[j];
    res.eigenvalues.push_back(rq);
    res.explained_variance_ratio.push_back(trace > 0.0 ? rq / trace : 0.0);
    ++res.effective_rank;
  }
  if (res.effective_rank < d_pca)
    res.warning = "rank " + std::to_string(res.effective_rank) + " is below the requested " +
                  std::to_string(d_pca) + " dimensions";

  res.projected = DenseMatrix(n, d_pca);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < res.effective_rank; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += centered(r, i) * res.components(k, i);
      res.projected(r, k) = s;
    }
  res.embedded = res.projected;
  for (std::size_t r = 0; r < n; ++r) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d_pca; ++k) norm += res.embedded(r, k) * res.embedded(r, k);
    norm = std::sqrt(norm);
    if (norm > 1e-300)
      for (std::size_t k = 0; k < d_pca; ++k) res.embedded(r, k) /= norm;
  }
  return res;
}

enum class FirstCenter : std::uint8_t { FarthestFromMean, Random };

struct KCenterResult {
  std::vector<std::size_t> centers;     // in selection order
  std::vector<std::size_t> assignment;  // index into centers, per point
  std::vector<double> nearest;          // distance to the assigned center
  double radius = 0.0;
};

// Farthest-first traversal; distance ties go to the lowest point id.
inline KCenterResult greedy_k_center(const DenseMatrix& points, std::size_t k,
                                     FirstCenter first = FirstCenter::FarthestFromMean, std::uint64_t seed = 0) {
  const std::size_t n = points.rows;
  require(k >= 1, ErrorCode::InvalidArgument, "k must be positive");
  require(k <= n, ErrorCode::InvalidArgument, "k exceeds the number of points");
  KCenterResult res;
  std::size_t start = 0;
  if (first == FirstCenter::Random) {
    Rng rng(derive_seed(seed, "k-center"));
    start = static_cast<std::size_t>(rng.index(n));
  } else {
    std::vector<double> mean(points.cols, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < points.cols; ++c) mean[c] += points(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    double best = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dist = distance(points.row(r), mean);
      if (dist > best) {
        best = dist;
        start = r;
      }
    }
  }
  res.centers.push_back(start);
  res.nearest.assign(n, 0.0);
  res.assignment.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) res.nearest[r] = distance(points.row(r), points.row(start));
  while (res.centers.size() < k) {
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < n; ++r)
      if (res.nearest[r] > best) {
        best = res.nearest[r];
        far = r;
      }
    const std::size_t idx = res.centers.size();
    res.centers.push_back(far);
    for (std::size_t r = 0; r < n; ++r) {
      const double dist = distance(points.row(r), points.row(far));
      if (dist < res.nearest[r]) {
        res.nearest[r] = dist;
        res.assignment[r] = idx;
      }
    }
  }
  res.radius = n ? *std::max_element(res.nearest.begin(), res.nearest.end()) : 0.0;
  return res;
}

// One medoid per occupied cluster, largest clusters first, then a seeded
// uniform fill from the remaining slice members.
inline std::vector<std::size_t> select_representatives(const std::vector<std::size_t>& slice_ids,
                                                        const std::vector<std::size_t>& assignment,
                                                        const DenseMatrix& points, std::size_t n_sel,
                                                        std::uint64_t seed) {
  require(!slice_ids.empty(), ErrorCode::EmptyInput, "slice has no examples");
  if (n_sel >= slice_ids.size()) {
    std::vector<std::size_t> all(slice_ids);
    std::sort(all.begin(), all.end());
    return all;
  }
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t id : slice_ids) members[assignment.at(id)].push_back(id);
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (cluster, occupancy)
  for (const auto& [c, m] : members) order.emplace_back(c, m.size());
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a.second > b.second; });

  std::vector<std::size_t> out;
  std::vector<bool> taken(points.rows, false);
  for (const auto& [cluster, occupancy] : order) {
    if (out.size() >= n_sel) break;
    auto m = members[cluster];
    std::sort(m.begin(), m.end());
    std::size_t medoid = m.front();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a : m) {
      double total = 0.0;
      for (std::size_t b : m) total += distance(points.row(a), points.row(b));
      if (total < best) {
        best = total;
        medoid = a;
      }
    }
    out.push_back(medoid);
    taken[medoid] = true;
  }
  if (out.size() < n_sel) {
    std::vector<std::size_t> rest;
    for (std::size_t id : slice_ids)
      if (!taken[id]) rest.push_back(id);
    std::sort(rest.begin(), rest.end());
    Rng rng(derive_seed(seed, "representatives"));
    for (std::size_t i : rng.sample_without_replacement(rest.size(), n_sel - out.size())) out.push_back(rest[i]);
  }
  return out;
}

struct MatchedPair {
  std::size_t associated = 0;
  std::size_t unrelated = 0;
  double distance = 0.0;
  bool fallback = false;  // no length-compatible partner was available
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  bool truncated = false;
  std::vector<std::string> warnings;
};

// Greedy nearest-neighbour controls without replacement, in ascending order
// of the associated id. Lengths match when |l_a - l_u| <= tol * l_a.
inline MatchResult match_controls(std::vector<std::size_t> selected_plus, const std::vector<std::size_t>& pool_minus,
                                  const DenseMatrix& points, const std::vector<double>& lengths, double tol) {
  require(!pool_minus.empty(), ErrorCode::EmptyInput, "control pool is empty");
  std::sort(selected_plus.begin(), selected_plus.end());
  std::vector<std::size_t> pool(pool_minus);
  std::sort(pool.begin(), pool.end());
  std::vector<bool> used(pool.size(), false);
  MatchResult res;
  std::size_t fallbacks = 0;
  for (std::size_t a : selected_plus) {
    std::optional<std::size_t> best_ok, best_any;
    double d_ok = std::numeric_limits<double>::infinity(), d_any = d_ok;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      const double dist = distance(points.row(a), points.row(pool[i]));
      if (dist < d_any) {
        d_any = dist;
        best_any = i;
      }
      const bool length_ok =
          lengths.empty() || std::abs(lengths[a] - lengths[pool[i]]) <= tol * std::abs(lengths[a]) + 1e-12;
      if (length_ok && dist < d_ok) {
        d_ok = dist;
        best_ok = i;
      }
    }
    if (!best_any) {
      res.truncated = true;
      res.warnings.push_back("control pool exhausted after " + std::to_string(res.pairs.size()) + " of " +
                             std::to_string(selected_plus.size()) + " pairs");
      break;
    }
    const bool fallback = !best_ok.has_value();
    const std::size_t i = fallback ? *best_any : *best_ok;
    used[i] = true;
    fallbacks += fallback;
    res.pairs.push_back({a, pool[i], fallback ? d_any : d_ok, fallback});
  }
  if (fallbacks > 0)
    res.warnings.push_back(std::to_string(fallbacks) + " pairs fell back to unconstrained nearest neighbours");
  return res;
}

struct CoverageDiagnostics {
  double radius = 0.0;
  double fraction_within = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
  double max = 0.0;
};

inline CoverageDiagnostics coverage_diagnostics(const DenseMatrix& points, const std::vector<std::size_t>& point_ids,
                                                const std::vector<std::size_t>& centers, double radius) {
  require(!centers.empty(), ErrorCode::EmptyInput, "coverage diagnostics need at least one center");
  require(!point_ids.empty(), ErrorCode::EmptyInput, "coverage diagnostics need at least one point");
  std::vector<double> nearest;
  std::size_t within = 0;
  for (std::size_t p : point_ids) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c : centers) best = std::min(best, distance(points.row(p), points.row(c)));
    nearest.push_back(best);
    within += best <= radius;
  }
  CoverageDiagnostics d;
  d.radius = radius;
  d.fraction_within = static_cast<double>(within) / static_cast<double>(point_ids.size());
  d.q50 = quantile(nearest, 0.5);
  d.q90 = quantile(nearest, 0.9);
  d.q99 = quantile(nearest, 0.99);
  d.max = *std::max_element(nearest.begin(), nearest.end());
  return d;
}

enum class PlanKind : std::uint8_t { Spectral, Random };

inline std::string_view to_string(PlanKind k) { return k == PlanKind::Spectral ? "spectral" : "random"; }

struct CoverageConfig {
  std::size_t d_pca = 64;
  std::size_t clusters = 100;
  std::size_t n_sel = 50;
  double length_tolerance = 0.2;
  double radius = 0.5;
  FirstCenter first_center = FirstCenter::FarthestFromMean;
  std::uint64_t seed = 0;
};

struct CoveragePlan {
  PlanKind kind = PlanKind::Spectral;
  std::uint64_t seed = 0;
  std::vector<std::size_t> selected_plus;
  std::vector<std::size_t> selected_minus;  // matched partners
  std::vector<MatchedPair> pairs;
  CoverageDiagnostics diagnostics;
  std::size_t d_pca = 0;
  std::size_t clusters = 0;
  std::vector<std::string> warnings;

  EvalSubset eval_subset() const {
    EvalSubset s;
    for (auto id : selected_plus) s.plus.push_back(static_cast<ExampleId>(id));
    for (auto id : selected_minus) s.minus.push_back(static_cast<ExampleId>(id));
    std::sort(s.plus.begin(), s.plus.end());
    std::sort(s.minus.begin(), s.minus.end());
    return s;
  }
};

// Space shared by the spectral and random plans of one regime: PCA of the
// regime's examples (rows of `embedding` indexed by example id).
struct PlanSpace {
  DenseMatrix points;  // one row per example id; rows outside the regime stay zero
  std::vector<std::size_t> regime_ids;
  std::size_t d_pca = 0;
  std::optional<std::string> warning;
};

inline PlanSpace plan_space(const DenseMatrix& embedding, const std::vector<std::size_t>& plus,
                            const std::vector<std::size_t>& minus, std::size_t d_pca) {
  PlanSpace space;
  space.regime_ids = plus;
  space.regime_ids.insert(space.regime_ids.end(), minus.begin(), minus.end());
  std::sort(space.regime_ids.begin(), space.regime_ids.end());
  const std::size_t n = space.regime_ids.size();
  require(n >= 2, ErrorCode::EmptyInput, "coverage needs at least two examples");
  space.d_pca = std::min({d_pca, n, embedding.cols});
  DenseMatrix sub(n, embedding.cols);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < embedding.cols; ++c) sub(r, c) = embedding(space.regime_ids[r], c);
  auto pca = pca_embed(sub, space.d_pca);
  space.warning = pca.warning;
  space.points = DenseMatrix(embedding.rows, space.d_pca);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < space.d_pca; ++c) space.points(space.regime_ids[r], c) = pca.embedded(r, c);
  return space;
}

namespace detail {

inline CoveragePlan finish_plan(PlanKind kind, std::vector<std::size_t> selected, const std::vector<std::size_t>& plus,
                                const std::vector<std::size_t>& minus, const PlanSpace& space,
                                const std::vector<double>& lengths, const CoverageConfig& cfg) {
  CoveragePlan plan;
  plan.kind = kind;
  plan.seed = cfg.seed;
  plan.d_pca = space.d_pca;
  if (space.warning) plan.warnings.push_back(*space.warning);
  auto match = match_controls(selected, minus, space.points, lengths, cfg.length_tolerance);
  plan.selected_plus = std::move(selected);
  std::sort(plan.selected_plus.begin(), plan.selected_plus.end());
  plan.pairs = match.pairs;
  for (const auto& p : match.pairs) plan.selected_minus.push_back(p.unrelated);
  std::sort(plan.selected_minus.begin(), plan.selected_minus.end());
  plan.warnings.insert(plan.warnings.end(), match.warnings.begin(), match.warnings.end());
  plan.diagnostics = coverage_diagnostics(space.points, plus, plan.selected_plus, cfg.radius);
  return plan;
}

}  // namespace detail

inline CoveragePlan spectral_plan(const PlanSpace& space, const std::vector<std::size_t>& plus,
                                  const std::vector<std::size_t>& minus, const std::vector<double>& lengths,
                                  const CoverageConfig& cfg) {
  require(!plus.empty() && !minus.empty(), ErrorCode::EmptyInput, "both slices need examples");
  // Cluster the regime's examples only.
  DenseMatrix sub(space.regime_ids.size(), space.points.cols);
  for (std::size_t r = 0; r < space.regime_ids.size(); ++r)
    for (std::size_t c = 0; c < space.points.cols; ++c) sub(r, c) = space.points(space.regime_ids[r], c);
  const std::size_t k = std::min(cfg.clusters, space.regime_ids.size());
  auto kc = greedy_k_center(sub, k, cfg.first_center, cfg.seed);
  std::vector<std::size_t> assignment(space.points.rows, 0);
  for (std::size_t r = 0; r < space.regime_ids.size(); ++r) assignment[space.regime_ids[r]] = kc.assignment[r];
  auto selected = select_representatives(plus, assignment, space.points, cfg.n_sel, cfg.seed);
  auto plan = detail::finish_plan(PlanKind::Spectral, std::move(selected), plus, minus, space, lengths, cfg);
  plan.clusters = k;
  return plan;
}

inline CoveragePlan random_plan(const PlanSpace& space, const std::vector<std::size_t>& plus,
                                const std::vector<std::size_t>& minus, const std::vector<double>& lengths,
                                const CoverageConfig& cfg) {
  require(!plus.empty() && !minus.empty(), ErrorCode::EmptyInput, "both slices need examples");
  const std::size_t n_sel = std::min(cfg.n_sel, plus.size());
  Rng rng(derive_seed(cfg.seed, "random-plan"));
  std::vector<std::size_t> selected;
  for (std::size_t i : rng.sample_without_replacement(plus.size(), n_sel)) selected.push_back(plus[i]);
  return detail::finish_plan(PlanKind::Random, std::move(selected), plus, minus, space, lengths, cfg);
}

inline nlohmann::ordered_json plan_to_json(const CoveragePlan& p) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(p.kind));
  j["seed"] = p.seed;
  j["d_pca"] = p.d_pca;
  j["clusters"] = p.clusters;
  j["selected_plus"] = p.selected_plus;
  j["selected_minus"] = p.selected_minus;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& m : p.pairs)
    pairs.push_back({{"associated", m.associated}, {"unrelated", m.unrelated}, {"distance", m.distance},
                     {"fallback", m.fallback}});
  j["pairs"] = pairs;
  j["diagnostics"] = {{"radius", p.diagnostics.radius},   {"fraction_within", p.diagnostics.fraction_within},
                      {"q50", p.diagnostics.q50},         {"q90", p.diagnostics.q90},
                      {"q99", p.diagnostics.q99},         {"max", p.diagnostics.max}};
  j["warnings"] = p.warnings;
  return j;
}

// Synthetic embedding provider: cluster center + slice shift + isotropic
// noise. The last cluster is pushed far out when the task has a rare cluster.
struct LatentEmbeddingParams {
  std::size_t dim = 16;
  double cluster_scale = 3.0;
  double slice_shift = 1.0;
  double noise_sd = 0.5;
  double rare_scale = 3.0;
  std::uint64_t seed = 0;
};

inline DenseMatrix planted_latent_embedding(const SyntheticTask& task, const LatentEmbeddingParams& p) {
  require(p.dim >= 1, ErrorCode::InvalidArgument, "embedding dimension must be positive");
  Rng rng(derive_seed(p.seed, "embedding"));
  std::uint32_t n_clusters = 1;
  for (const auto& e : task.examples) n_clusters = std::max(n_clusters, e.cluster + 1);
  DenseMatrix centers(n_clusters, p.dim);
  for (auto& v : centers.data) v = rng.normal(0.0, p.cluster_scale);
  if (task.spec.rare_cluster_fraction > 0.0 && n_clusters >= 2)
    for (std::size_t c = 0; c < p.dim; ++c) centers(n_clusters - 1, c) *= p.rare_scale;
  std::vector<double> shift(p.dim);
  for (auto& v : shift) v = rng.normal();
  double norm = 0.0;
  for (double v : shift) norm += v * v;
  norm = std::sqrt(norm);
  DenseMatrix out(task.examples.size(), p.dim);
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    const auto& e = task.examples[i];
    const double s = e.slice == Slice::Associated ? p.slice_shift / norm : 0.0;
    for (std::size_t c = 0; c < p.dim; ++c) out(i, c) = centers(e.cluster, c) + s * shift[c] + rng.normal(0.0, p.noise_sd);
  }
  return out;
}

inline std::vector<double> example_lengths(const SyntheticTask& task) {
  std::vector<double> out;
  for (const auto& e : task.examples) out.push_back(e.length);
  return out;
}

}  // namespace ruleloc
