#pragma once

// Candidate reduction: ranked neuron coordinates and per-layer retention.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/core.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/oracle.hpp"
#include "ruleloc/random.hpp"

namespace ruleloc {

// Scalar objective over an activation vector with a closed-form gradient.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::size_t dim() const = 0;
  virtual double value(std::span<const double> h) const = 0;
  virtual void gradient(std::span<const double> h, std::span<double> out) const = 0;
  virtual std::string name() const = 0;
};

// w . h
class LinearSurrogate final : public Surrogate {
 public:
  explicit LinearSurrogate(std::vector<double> w) : w_(std::move(w)) {}
  std::size_t dim() const override { return w_.size(); }
  double value(std::span<const double> h) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) s += w_[i] * h[i];
    return s;
  }
  void gradient(std::span<const double>, std::span<double> out) const override {
    std::copy(w_.begin(), w_.end(), out.begin());
  }
  std::string name() const override { return "linear"; }

 private:
  std::vector<double> w_;
};

// 0.5 h'Ah + b . h with symmetric A (row-major).
class QuadraticSurrogate final : public Surrogate {
 public:
  QuadraticSurrogate(std::vector<double> a, std::vector<double> b) : a_(std::move(a)), b_(std::move(b)) {
    require(a_.size() == b_.size() * b_.size(), ErrorCode::InvalidArgument, "quadratic form has the wrong shape");
  }
  std::size_t dim() const override { return b_.size(); }
  double value(std::span<const double> h) const override {
    const std::size_t d = b_.size();
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < d; ++j) row += a_[i * d + j] * h[j];
      s += 0.5 * h[i] * row + b_[i] * h[i];
    }
    return s;
  }
  void gradient(std::span<const double> h, std::span<double> out) const override {
    const std::size_t d = b_.size();
    for (std::size_t i = 0; i < d; ++i) {
      double row = b_[i];
      for (std::size_t j = 0; j < d; ++j) row += a_[i * d + j] * h[j];
      out[i] = row;
    }
  }
  std::string name() const override { return "quadratic"; }

 private:
  std::vector<double> a_;
  std::vector<double> b_;
};

// sum_i a_i tanh(w_i h_i)
class TanhSurrogate final : public Surrogate {
 public:
  TanhSurrogate(std::vector<double> a, std::vector<double> w) : a_(std::move(a)), w_(std::move(w)) {
    require(a_.size() == w_.size(), ErrorCode::InvalidArgument, "tanh surrogate weights differ in length");
  }
  std::size_t dim() const override { return w_.size(); }
  double value(std::span<const double> h) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) s += a_[i] * std::tanh(w_[i] * h[i]);
    return s;
  }
  void gradient(std::span<const double> h, std::span<double> out) const override {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      const double t = std::tanh(w_[i] * h[i]);
      out[i] = a_[i] * w_[i] * (1.0 - t * t);
    }
  }
  std::string name() const override { return "tanh"; }

 private:
  std::vector<double> a_;
  std::vector<double> w_;
};

// Midpoint Riemann integrated gradients from h_minus to h_plus, averaged
// over pairs in fixed order.
inline std::vector<double> ig_surrogate_score(const Surrogate& f, const std::vector<std::vector<double>>& h_plus,
                                              const std::vector<std::vector<double>>& h_minus, std::uint32_t steps) {
  require(steps >= 1, ErrorCode::InvalidArgument, "at least one integration step is required");
  require(h_plus.size() == h_minus.size() && !h_plus.empty(), ErrorCode::InvalidArgument,
          "activation pairs must be nonempty and matched");
  const std::size_t d = f.dim();
  std::vector<double> total(d, 0.0), h(d), g(d), pair_score(d);
  for (std::size_t p = 0; p < h_plus.size(); ++p) {
    require(h_plus[p].size() == d && h_minus[p].size() == d, ErrorCode::InvalidArgument,
            "activation dimension does not match the surrogate");
    std::fill(pair_score.begin(), pair_score.end(), 0.0);
    for (std::uint32_t s = 1; s <= steps; ++s) {
      const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
      for (std::size_t i = 0; i < d; ++i) h[i] = h_minus[p][i] + alpha * (h_plus[p][i] - h_minus[p][i]);
      f.gradient(h, g);
      for (std::size_t i = 0; i < d; ++i) pair_score[i] += g[i] * (h_plus[p][i] - h_minus[p][i]);
    }
    for (std::size_t i = 0; i < d; ++i) total[i] += pair_score[i] / static_cast<double>(steps);
  }
  for (double& v : total) v /= static_cast<double>(h_plus.size());
  return total;
}

struct RankedCoord {
  NeuronCoord coord;
  double score = 0.0;
};

struct CandidateRanking {
  std::vector<RankedCoord> entries;  // |score| descending, ties by coordinate
  std::string scorer;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
};

inline CandidateRanking make_ranking(std::span<const NeuronCoord> coords, std::span<const double> scores,
                                     std::string scorer, nlohmann::ordered_json parameters = nlohmann::ordered_json::object()) {
  require(coords.size() == scores.size(), ErrorCode::InvalidArgument, "coordinates and scores differ in length");
  CandidateRanking r;
  r.scorer = std::move(scorer);
  r.parameters = std::move(parameters);
  for (std::size_t i = 0; i < coords.size(); ++i) r.entries.push_back({coords[i], scores[i]});
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedCoord& a, const RankedCoord& b) {
    const double x = std::abs(a.score), y = std::abs(b.score);
    if (x != y) return x > y;
    return a.coord < b.coord;
  });
  return r;
}

using ElementFilter = std::function<bool(const NeuronCoord&)>;

// Channels below `attention_channels` in every layer stand for attention
// elements; the filter keeps the remaining MLP channels.
inline ElementFilter mlp_only(std::uint32_t attention_channels) {
  return [attention_channels](const NeuronCoord& c) { return c.channel >= attention_channels; };
}

struct RetainedSet {
  std::vector<NeuronCoord> ranked;                         // global rank order
  std::map<std::uint32_t, std::vector<NeuronCoord>> by_layer;  // rank order within each layer
  std::size_t requested = 0;

  std::size_t size() const { return ranked.size(); }
  bool contains(const NeuronCoord& c) const { return std::find(ranked.begin(), ranked.end(), c) != ranked.end(); }
};

inline RetainedSet retain_top(const CandidateRanking& ranking, std::size_t m, const ElementFilter& filter = {}) {
  require(m >= 1, ErrorCode::InvalidArgument, "retention budget must be positive");
  RetainedSet out;
  out.requested = m;
  for (const auto& e : ranking.entries) {
    if (out.ranked.size() >= m) break;
    if (filter && !filter(e.coord)) continue;
    out.ranked.push_back(e.coord);
    out.by_layer[e.coord.layer].push_back(e.coord);
  }
  return out;
}

inline void write_ranking_csv(std::ostream& out, const CandidateRanking& ranking, const RetainedSet& retained) {
  std::set<NeuronCoord> kept(retained.ranked.begin(), retained.ranked.end());
  out << "coord,score,retained,scorer\n";
  for (const auto& e : ranking.entries) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", e.score);
    out << to_string(e.coord) << ',' << buf << ',' << (kept.count(e.coord) ? 1 : 0) << ',' << ranking.scorer << '\n';
  }
}

struct SurrogateParams {
  std::uint32_t pairs = 8;
  std::uint32_t steps = 20;
  double agonist_gain = 1.0;
  double background_sd = 0.05;
  std::uint64_t seed = 0;
};

// IG ranking of a tanh surrogate whose weights grow with planted strength in
// the regime; background weights are small and random.
inline CandidateRanking planted_surrogate_ranking(const SyntheticTask& task, Regime regime, const SurrogateParams& p) {
  const std::size_t d = task.neuron_count();
  Rng rng(derive_seed(p.seed, "surrogate"));
  std::vector<double> a(d), w(d, 1.0);
  for (auto& v : a) v = rng.normal(0.0, p.background_sd);
  std::vector<bool> planted(d, false);
  for (const auto& n : task.planted_in(regime, PlantKind::Agonist)) {
    const auto i = task.require_index(n.coord);
    a[i] = p.agonist_gain * (0.5 + n.target_strength);
    planted[i] = true;
  }
  TanhSurrogate f(a, w);
  std::vector<std::vector<double>> hp(p.pairs, std::vector<double>(d)), hm(p.pairs, std::vector<double>(d));
  for (std::uint32_t k = 0; k < p.pairs; ++k)
    for (std::size_t i = 0; i < d; ++i) {
      hm[k][i] = rng.normal(0.0, 0.1);
      hp[k][i] = hm[k][i] + (planted[i] ? 1.0 + rng.normal(0.0, 0.1) : rng.normal(0.0, 0.3));
    }
  std::vector<NeuronCoord> coords;
  for (std::size_t i = 0; i < d; ++i) coords.push_back(task.coord_of(i));
  const auto scores = ig_surrogate_score(f, hp, hm, p.steps);
  return make_ranking(coords, scores, "ig-surrogate",
                      {{"pairs", p.pairs}, {"steps", p.steps}, {"agonist_gain", p.agonist_gain},
                       {"background_sd", p.background_sd}, {"seed", p.seed}});
}

struct ReducerResult {
  std::vector<NeuronCoord> retained;  // sorted
  std::vector<NeuronCoord> dropped;   // planted agonists deliberately excluded
  std::vector<NeuronCoord> kept_planted;
};

// Keeps every planted agonist of the regime except a seeded leak fraction,
// padded with background coordinates up to m.
inline ReducerResult ground_truth_reducer(const SyntheticTask& task, Regime regime, std::size_t m, double leak_rate,
                                          std::uint64_t seed) {
  require(leak_rate >= 0.0 && leak_rate <= 1.0, ErrorCode::InvalidArgument, "leak rate must lie in [0, 1]");
  std::vector<NeuronCoord> agonists;
  for (const auto& n : task.planted_in(regime, PlantKind::Agonist)) agonists.push_back(n.coord);
  std::sort(agonists.begin(), agonists.end());
  Rng rng(derive_seed(seed, "reducer"));
  const auto n_drop = static_cast<std::size_t>(std::lround(leak_rate * static_cast<double>(agonists.size())));
  std::set<std::size_t> drop_idx;
  for (std::size_t i : rng.sample_without_replacement(agonists.size(), n_drop)) drop_idx.insert(i);
  ReducerResult res;
  for (std::size_t i = 0; i < agonists.size(); ++i)
    (drop_idx.count(i) ? res.dropped : res.kept_planted).push_back(agonists[i]);
  require(res.kept_planted.size() <= m, ErrorCode::InvalidArgument, "retention budget is below the kept agonists");
  std::set<NeuronCoord> excluded(agonists.begin(), agonists.end());
  std::vector<NeuronCoord> background;
  for (std::size_t i = 0; i < task.neuron_count(); ++i) {
    const auto c = task.coord_of(i);
    if (!excluded.count(c)) background.push_back(c);
  }
  res.retained = res.kept_planted;
  const std::size_t pad = std::min(m - res.kept_planted.size(), background.size());
  for (std::size_t i : rng.sample_without_replacement(background.size(), pad)) res.retained.push_back(background[i]);
  std::sort(res.retained.begin(), res.retained.end());
  return res;
}

}  // namespace ruleloc
