#pragma once

// Behavior oracles. The synthetic task plants per-neuron flip sets and a
// group flips an example iff some member's flip set contains it.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ruleloc/bitset.hpp"
#include "ruleloc/core.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/predicates.hpp"
#include "ruleloc/random.hpp"

namespace ruleloc {

struct SliceBatch {
  Slice slice = Slice::Associated;
  std::span<const ExampleId> examples;
};

class BehaviorOracle {
 public:
  virtual ~BehaviorOracle() = default;

  // One group evaluation: outcomes for every batch, counted once.
  std::vector<std::vector<std::uint8_t>> evaluate(std::span<const NeuronCoord> group, Regime regime,
                                                  std::span<const SliceBatch> batches, std::uint64_t replicate = 0) {
    auto out = do_evaluate(group, regime, batches, replicate);
    queries_.fetch_add(1, std::memory_order_relaxed);
    return out;
  }

  std::vector<std::uint8_t> query(std::span<const NeuronCoord> group, Slice slice, Regime regime,
                                  std::span<const ExampleId> examples, std::uint64_t replicate = 0) {
    const SliceBatch batch{slice, examples};
    return std::move(evaluate(group, regime, std::span<const SliceBatch>(&batch, 1), replicate).front());
  }

  virtual std::vector<std::vector<NeuronCoord>> candidate_universe() const = 0;

  std::uint64_t query_count() const noexcept { return queries_.load(std::memory_order_relaxed); }

 protected:
  virtual std::vector<std::vector<std::uint8_t>> do_evaluate(std::span<const NeuronCoord> group, Regime regime,
                                                             std::span<const SliceBatch> batches,
                                                             std::uint64_t replicate) const = 0;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

enum class BaselineMode : std::uint8_t { Zero, Mean, MeanPositional };

inline std::string_view to_string(BaselineMode m) {
  switch (m) {
    case BaselineMode::Zero: return "zero";
    case BaselineMode::Mean: return "mean";
    case BaselineMode::MeanPositional: return "mean-positional";
  }
  return "zero";
}

inline BaselineMode parse_baseline_mode(std::string_view s) {
  if (s == "zero") return BaselineMode::Zero;
  if (s == "mean") return BaselineMode::Mean;
  if (s == "mean-positional") return BaselineMode::MeanPositional;
  fail(ErrorCode::Parse, "unknown baseline mode '" + std::string(s) + "'");
}

enum class PlantKind : std::uint8_t { Agonist, Antagonist };

inline std::string_view to_string(PlantKind k) { return k == PlantKind::Agonist ? "agonist" : "antagonist"; }

inline PlantKind parse_plant_kind(std::string_view s) {
  if (s == "agonist") return PlantKind::Agonist;
  if (s == "antagonist") return PlantKind::Antagonist;
  fail(ErrorCode::Parse, "unknown plant kind '" + std::string(s) + "'");
}

struct RegimePlant {
  std::vector<double> agonist_strengths;
  // Unrelated-slice flip rate as a fraction of the associated-slice rate.
  double unrelated_ratio = 0.2;
  // Share of each agonist's associated flips drawn from the previous agonist.
  double overlap = 0.0;
  std::uint32_t antagonists = 0;
  double background_cap = 0.05;

  friend bool operator==(const RegimePlant&, const RegimePlant&) = default;
};

struct PlantSpec {
  std::vector<std::uint32_t> layer_widths{256};
  // examples[b][slice]: slice 0 is associated, 1 is unrelated.
  std::array<std::array<std::uint32_t, 2>, 2> examples{{{48, 96}, {96, 48}}};
  std::array<RegimePlant, 2> regimes{};
  double tau = 0.2;
  double margin = 0.03;
  bool separated_background = false;
  double background_density = 0.25;
  bool aligned_predicates = false;
  std::uint32_t noise_columns = 4;
  std::uint32_t clusters = 6;
  double rare_cluster_fraction = 0.0;
  double noise_plus = 0.0;
  double noise_minus = 0.0;
  BaselineMode baseline_mode = BaselineMode::Zero;
  std::uint64_t seed = 1;

  RegimePlant& regime(Regime r) { return regimes[label(r)]; }
  const RegimePlant& regime(Regime r) const { return regimes[label(r)]; }
  std::uint32_t count(Regime r, Slice s) const { return examples[label(r)][s == Slice::Associated ? 0 : 1]; }
  std::uint32_t& count(Regime r, Slice s) { return examples[label(r)][s == Slice::Associated ? 0 : 1]; }

  friend bool operator==(const PlantSpec&, const PlantSpec&) = default;
};

struct ExampleInfo {
  Regime baseline = Regime::Positive;
  Slice slice = Slice::Associated;
  std::uint32_t cluster = 0;
  std::uint32_t length = 0;

  friend bool operator==(const ExampleInfo&, const ExampleInfo&) = default;
};

struct PlantedNeuron {
  NeuronCoord coord;
  Regime regime = Regime::Positive;
  PlantKind kind = PlantKind::Agonist;
  double target_strength = 0.0;

  friend bool operator==(const PlantedNeuron&, const PlantedNeuron&) = default;
};

// Immutable planted-truth task. flips[b][flat] holds F(b, ., j) over global
// example ids; only examples with baseline b are ever set.
struct SyntheticTask {
  PlantSpec spec;
  std::vector<std::uint32_t> layer_widths;
  std::vector<ExampleInfo> examples;
  std::array<std::vector<Bitset>, 2> flips;
  std::vector<PlantedNeuron> planted;
  std::vector<PredicateColumn> features;
  double noise_plus = 0.0;
  double noise_minus = 0.0;
  std::uint64_t noise_seed = 0;
  BaselineMode baseline_mode = BaselineMode::Zero;

  std::size_t neuron_count() const {
    return std::accumulate(layer_widths.begin(), layer_widths.end(), std::size_t{0});
  }

  std::optional<std::size_t> flat_index(const NeuronCoord& c) const {
    if (c.layer >= layer_widths.size() || c.channel >= layer_widths[c.layer]) return std::nullopt;
    std::size_t offset = 0;
    for (std::uint32_t l = 0; l < c.layer; ++l) offset += layer_widths[l];
    return offset + c.channel;
  }

  std::size_t require_index(const NeuronCoord& c) const {
    const auto idx = flat_index(c);
    if (!idx) fail(ErrorCode::Lookup, "unknown neuron " + to_string(c));
    return *idx;
  }

  NeuronCoord coord_of(std::size_t flat) const {
    for (std::uint32_t l = 0; l < layer_widths.size(); ++l) {
      if (flat < layer_widths[l]) return {l, static_cast<std::uint32_t>(flat)};
      flat -= layer_widths[l];
    }
    fail(ErrorCode::Lookup, "flat neuron index out of range");
  }

  const Bitset& flip_set(const NeuronCoord& c, Regime r) const { return flips[label(r)][require_index(c)]; }

  // Examples with baseline r on planted slice s, ascending.
  std::vector<ExampleId> slice_examples(Regime r, Slice s) const {
    std::vector<ExampleId> out;
    for (ExampleId i = 0; i < examples.size(); ++i)
      if (examples[i].baseline == r && examples[i].slice == s) out.push_back(i);
    return out;
  }

  std::vector<ExampleId> regime_examples(Regime r) const {
    std::vector<ExampleId> out;
    for (ExampleId i = 0; i < examples.size(); ++i)
      if (examples[i].baseline == r) out.push_back(i);
    return out;
  }

  std::vector<std::uint8_t> baseline_labels() const {
    std::vector<std::uint8_t> out(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) out[i] = label(examples[i].baseline);
    return out;
  }

  std::vector<NeuronCoord> layer_coords(std::uint32_t layer) const {
    require(layer < layer_widths.size(), ErrorCode::Lookup, "unknown layer");
    std::vector<NeuronCoord> out(layer_widths[layer]);
    for (std::uint32_t c = 0; c < layer_widths[layer]; ++c) out[c] = {layer, c};
    return out;
  }

  std::vector<PlantedNeuron> planted_in(Regime r, PlantKind kind) const {
    std::vector<PlantedNeuron> out;
    for (const auto& p : planted)
      if (p.regime == r && p.kind == kind) out.push_back(p);
    return out;
  }

  const PredicateColumn* feature(std::string_view name) const {
    for (const auto& f : features)
      if (f.name == name) return &f;
    return nullptr;
  }

  // Same flip sets with a different per-slice outcome-noise level.
  SyntheticTask with_noise(double plus, double minus) const {
    SyntheticTask copy = *this;
    copy.noise_plus = plus;
    copy.noise_minus = minus;
    return copy;
  }

  friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

// Name of the boolean column aligned with a planted neuron's flip set.
inline std::string aligned_column_name(const NeuronCoord& c) {
  return "phi_m" + std::to_string(c.layer) + "_" + std::to_string(c.channel);
}

namespace detail {

inline std::vector<ExampleId> pick(Rng& rng, const std::vector<ExampleId>& pool, std::size_t k) {
  std::vector<ExampleId> out;
  for (std::size_t i : rng.sample_without_replacement(pool.size(), k)) out.push_back(pool[i]);
  return out;
}

inline std::size_t checked_count(double strength, std::size_t n, const std::string& what) {
  const auto count = static_cast<std::size_t>(std::lround(strength * static_cast<double>(n)));
  const double residual = std::abs(static_cast<double>(count) / static_cast<double>(n) - strength);
  if (residual > 0.02)
    fail(ErrorCode::Infeasible, what + ": rounding residual " + std::to_string(residual) + " exceeds 0.02 with " +
                                    std::to_string(n) + " examples");
  return count;
}

}  // namespace detail

inline SyntheticTask plant_task(const PlantSpec& spec) {
  require(!spec.layer_widths.empty(), ErrorCode::InvalidArgument, "at least one layer is required");
  for (auto w : spec.layer_widths) require(w > 0, ErrorCode::InvalidArgument, "layer widths must be positive");
  require(spec.tau > 0.0 && spec.tau < 1.0, ErrorCode::InvalidArgument, "tau must lie in (0, 1)");
  require(spec.clusters >= 1, ErrorCode::InvalidArgument, "at least one cluster is required");
  for (Regime r : {Regime::Positive, Regime::Negative}) {
    const auto& rp = spec.regime(r);
    if (!(rp.background_cap < spec.tau))
      fail(ErrorCode::Infeasible, "background cap must be below tau");
    if (rp.overlap < 0.0 || rp.overlap > 1.0) fail(ErrorCode::Infeasible, "overlap must lie in [0, 1]");
    if (rp.unrelated_ratio < 0.0 || rp.unrelated_ratio > 1.0)
      fail(ErrorCode::Infeasible, "unrelated ratio must lie in [0, 1]");
    for (double s : rp.agonist_strengths) {
      if (s < spec.tau + spec.margin - 1e-12)
        fail(ErrorCode::Infeasible, "agonist strength " + std::to_string(s) + " is below tau + margin");
      if (s > 1.0) fail(ErrorCode::Infeasible, "agonist strength exceeds 1");
    }
    if (!rp.agonist_strengths.empty() || rp.antagonists > 0)
      for (Slice s : {Slice::Associated, Slice::Unrelated})
        if (spec.count(r, s) == 0) fail(ErrorCode::Infeasible, "planting into a regime with an empty slice");
  }

  SyntheticTask task;
  task.spec = spec;
  task.layer_widths = spec.layer_widths;
  task.noise_plus = spec.noise_plus;
  task.noise_minus = spec.noise_minus;
  task.noise_seed = derive_seed(spec.seed, "noise");
  task.baseline_mode = spec.baseline_mode;

  // Examples in blocks (b=1,+), (b=1,-), (b=0,+), (b=0,-).
  Rng ex_rng(derive_seed(spec.seed, "examples"));
  for (Regime r : {Regime::Positive, Regime::Negative})
    for (Slice s : {Slice::Associated, Slice::Unrelated})
      for (std::uint32_t i = 0; i < spec.count(r, s); ++i) task.examples.push_back({r, s, 0, 0});
  const std::size_t n_examples = task.examples.size();
  const bool has_rare = spec.rare_cluster_fraction > 0.0 && spec.clusters >= 2;
  const std::uint32_t common_clusters = has_rare ? spec.clusters - 1 : spec.clusters;
  for (auto& e : task.examples) {
    e.cluster = static_cast<std::uint32_t>(ex_rng.index(common_clusters));
    e.length = 12 + static_cast<std::uint32_t>(ex_rng.index(12)) + (e.slice == Slice::Associated ? 4 : 0);
  }
  if (has_rare) {
    const auto n_rare = static_cast<std::size_t>(std::lround(spec.rare_cluster_fraction * n_examples));
    for (std::size_t i : ex_rng.sample_without_replacement(n_examples, std::min(n_rare, n_examples)))
      task.examples[i].cluster = spec.clusters - 1;
  }

  const std::size_t n_neurons = task.neuron_count();
  std::size_t n_planted = 0;
  for (const auto& rp : spec.regimes) n_planted += rp.agonist_strengths.size() + rp.antagonists;
  if (n_planted > n_neurons) fail(ErrorCode::Infeasible, "too many planted neurons for the candidate universe");

  std::vector<std::size_t> order(n_neurons);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng coord_rng(derive_seed(spec.seed, "coords"));
  coord_rng.shuffle(order);
  std::size_t next_slot = 0;

  for (auto& f : task.flips) f.assign(n_neurons, Bitset(n_examples));

  for (Regime r : {Regime::Positive, Regime::Negative}) {
    const auto& rp = spec.regime(r);
    const auto plus = task.slice_examples(r, Slice::Associated);
    const auto minus = task.slice_examples(r, Slice::Unrelated);
    Rng rng(derive_seed(spec.seed, "plant", label(r)));
    auto& flips = task.flips[label(r)];
    std::vector<bool> planted_here(n_neurons, false);

    std::vector<ExampleId> previous;
    for (std::size_t i = 0; i < rp.agonist_strengths.size(); ++i) {
      const double s = rp.agonist_strengths[i];
      const std::size_t flat = order[next_slot++];
      planted_here[flat] = true;
      const std::size_t a = detail::checked_count(s, plus.size(), "agonist " + std::to_string(i));
      const auto c = static_cast<std::size_t>(
          std::lround(std::min(1.0, rp.unrelated_ratio * s) * static_cast<double>(minus.size())));

      std::vector<ExampleId> chosen;
      if (!previous.empty() && rp.overlap > 0.0) {
        const std::size_t shared =
            std::min(static_cast<std::size_t>(std::lround(rp.overlap * static_cast<double>(a))), previous.size());
        chosen = detail::pick(rng, previous, shared);
        std::vector<ExampleId> rest;
        std::set_difference(plus.begin(), plus.end(), previous.begin(), previous.end(), std::back_inserter(rest));
        if (rest.size() < a - shared)
          fail(ErrorCode::Infeasible, "agonist " + std::to_string(i) + ": insufficient complement for overlap");
        for (ExampleId x : detail::pick(rng, rest, a - shared)) chosen.push_back(x);
      } else {
        chosen = detail::pick(rng, plus, a);
      }
      std::sort(chosen.begin(), chosen.end());
      for (ExampleId x : chosen) flips[flat].set(x);
      for (ExampleId x : detail::pick(rng, minus, c)) flips[flat].set(x);
      previous = chosen;
      task.planted.push_back({task.coord_of(flat), r, PlantKind::Agonist, s});
    }
    for (std::uint32_t i = 0; i < rp.antagonists; ++i) {
      const std::size_t flat = order[next_slot++];
      planted_here[flat] = true;
      for (ExampleId x : plus) flips[flat].set(x);
      for (ExampleId x : minus) flips[flat].set(x);
      task.planted.push_back({task.coord_of(flat), r, PlantKind::Antagonist, 1.0});
    }

    // Background neurons stay strictly below tau on each slice; in the
    // separated layout every background flip lies in one shared pool, so any
    // union of background neurons stays under the cap too.
    std::array<std::vector<ExampleId>, 2> pools{plus, minus};
    std::array<std::size_t, 2> caps{};
    for (int s = 0; s < 2; ++s) {
      caps[s] = static_cast<std::size_t>(std::floor(rp.background_cap * static_cast<double>(pools[s].size()) + 1e-9));
      if (spec.separated_background) {
        pools[s] = detail::pick(rng, pools[s], caps[s]);
        std::sort(pools[s].begin(), pools[s].end());
      }
    }
    for (std::size_t flat = 0; flat < n_neurons; ++flat) {
      if (planted_here[flat]) continue;
      if (!rng.bernoulli(spec.background_density)) continue;
      for (int s = 0; s < 2; ++s) {
        const std::size_t limit = std::min(caps[s], pools[s].size());
        if (limit == 0) continue;
        const std::size_t k = 1 + static_cast<std::size_t>(rng.index(limit));
        for (ExampleId x : detail::pick(rng, pools[s], k)) flips[flat].set(x);
      }
    }
  }

  // Predicate columns.
  Rng feat_rng(derive_seed(spec.seed, "features"));
  auto column = [&](std::string name, ColumnKind kind, Provenance prov, Observability obs) -> PredicateColumn& {
    task.features.push_back({std::move(name), kind, prov, obs, std::vector<double>(n_examples, 0.0)});
    return task.features.back();
  };
  {
    auto& c = column("slice_flag", ColumnKind::Bool, Provenance::Seed, Observability::Prompt);
    for (std::size_t i = 0; i < n_examples; ++i) c.values[i] = task.examples[i].slice == Slice::Associated ? 1.0 : 0.0;
  }
  {
    auto& c = column("slice_score", ColumnKind::Real, Provenance::Seed, Observability::Prompt);
    for (std::size_t i = 0; i < n_examples; ++i)
      c.values[i] = (task.examples[i].slice == Slice::Associated ? 1.0 : 0.0) + feat_rng.normal(0.0, 0.35);
  }
  {
    auto& c = column("len", ColumnKind::Real, Provenance::Seed, Observability::Prompt);
    for (std::size_t i = 0; i < n_examples; ++i) c.values[i] = task.examples[i].length;
  }
  for (std::uint32_t j = 0; j < spec.noise_columns; ++j) {
    auto& c = column("noise_" + std::to_string(j), ColumnKind::Real, Provenance::Proposed, Observability::Prompt);
    for (auto& v : c.values) v = feat_rng.normal();
  }
  {
    auto& c = column("out_conf", ColumnKind::Real, Provenance::Proposed, Observability::OutputDerived);
    for (std::size_t i = 0; i < n_examples; ++i)
      c.values[i] = 0.6 * label(task.examples[i].baseline) + feat_rng.normal(0.0, 0.3);
  }
  // Aligned columns equal F-set membership inside the planted regime. In the
  // other regime they fire at the same per-slice rate, independently, so the
  // column describes prompts rather than the baseline outcome.
  if (spec.aligned_predicates) {
    Rng mirror_rng(derive_seed(spec.seed, "aligned-mirror"));
    for (const auto& p : task.planted) {
      if (p.kind != PlantKind::Agonist) continue;
      auto& c = column(aligned_column_name(p.coord), ColumnKind::Bool, Provenance::Proposed, Observability::Prompt);
      const auto& f = task.flip_set(p.coord, p.regime);
      double rate[2] = {0.0, 0.0};
      for (Slice s : {Slice::Associated, Slice::Unrelated}) {
        const auto ids = task.slice_examples(p.regime, s);
        std::size_t hits = 0;
        for (auto id : ids) hits += f.test(id);
        rate[s == Slice::Associated ? 0 : 1] =
            ids.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ids.size());
      }
      for (std::size_t i = 0; i < n_examples; ++i) {
        const auto& ex = task.examples[i];
        if (ex.baseline == p.regime)
          c.values[i] = f.test(i) ? 1.0 : 0.0;
        else
          c.values[i] = mirror_rng.bernoulli(rate[ex.slice == Slice::Associated ? 0 : 1]) ? 1.0 : 0.0;
      }
    }
  }
  return task;
}

// Exact flip counts of a group on explicit slices (no noise).
inline GroupEffect exact_effect(const SyntheticTask& task, std::span<const NeuronCoord> group, Regime regime,
                                std::span<const ExampleId> plus, std::span<const ExampleId> minus) {
  require(!plus.empty() && !minus.empty(), ErrorCode::InvalidArgument, "exact_effect needs both slices");
  Bitset u(task.examples.size());
  for (const auto& c : group) u |= task.flip_set(c, regime);
  GroupEffect e;
  for (ExampleId x : plus) e.flips_plus += u.test(x) ? 1 : 0;
  for (ExampleId x : minus) e.flips_minus += u.test(x) ? 1 : 0;
  e.n_plus = static_cast<std::uint32_t>(plus.size());
  e.n_minus = static_cast<std::uint32_t>(minus.size());
  e.delta_plus = static_cast<double>(e.flips_plus) / e.n_plus;
  e.delta_minus = static_cast<double>(e.flips_minus) / e.n_minus;
  e.ucb_plus = e.delta_plus;
  e.ucb_minus = e.delta_minus;
  return e;
}

// Exact effect on the planted slices of regime b.
inline GroupEffect exact_effect(const SyntheticTask& task, std::span<const NeuronCoord> group, Regime regime) {
  const auto plus = task.slice_examples(regime, Slice::Associated);
  const auto minus = task.slice_examples(regime, Slice::Unrelated);
  return exact_effect(task, group, regime, plus, minus);
}

// All j whose exact singleton strength on the planted slices is >= tau.
inline std::map<NeuronCoord, double> ground_truth_agonists(const SyntheticTask& task, double tau, Regime regime) {
  std::map<NeuronCoord, double> out;
  const auto plus = task.slice_examples(regime, Slice::Associated);
  const auto minus = task.slice_examples(regime, Slice::Unrelated);
  if (plus.empty() || minus.empty()) return out;
  const auto& flips = task.flips[label(regime)];
  for (std::size_t flat = 0; flat < flips.size(); ++flat) {
    if (flips[flat].none()) continue;
    std::size_t fp = 0, fm = 0;
    for (ExampleId x : plus) fp += flips[flat].test(x) ? 1 : 0;
    for (ExampleId x : minus) fm += flips[flat].test(x) ? 1 : 0;
    const double strength = std::max(static_cast<double>(fp) / plus.size(), static_cast<double>(fm) / minus.size());
    if (strength >= tau) out.emplace(task.coord_of(flat), strength);
  }
  return out;
}

class SyntheticOracle final : public BehaviorOracle {
 public:
  explicit SyntheticOracle(std::shared_ptr<const SyntheticTask> task) : task_(std::move(task)) {
    require(task_ != nullptr, ErrorCode::InvalidArgument, "oracle needs a task");
  }

  const SyntheticTask& task() const noexcept { return *task_; }

  std::vector<std::vector<NeuronCoord>> candidate_universe() const override {
    std::vector<std::vector<NeuronCoord>> out;
    for (std::uint32_t l = 0; l < task_->layer_widths.size(); ++l) out.push_back(task_->layer_coords(l));
    return out;
  }

 protected:
  std::vector<std::vector<std::uint8_t>> do_evaluate(std::span<const NeuronCoord> group, Regime regime,
                                                     std::span<const SliceBatch> batches,
                                                     std::uint64_t replicate) const override {
    const auto& task = *task_;
    const auto& flips = task.flips[label(regime)];
    Bitset u(task.examples.size());
    std::uint64_t group_hash = 0;
    for (const auto& c : group) {
      const std::size_t flat = task.require_index(c);
      u |= flips[flat];
      group_hash += mix64(flat + 1);  // order-independent
    }
    const std::uint64_t noise_key = hash_combine(hash_combine(task.noise_seed, group_hash), replicate);
    const std::uint8_t b = label(regime);
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(batches.size());
    for (const auto& batch : batches) {
      const double rate = group.empty() ? 0.0 : (batch.slice == Slice::Associated ? task.noise_plus : task.noise_minus);
      std::vector<std::uint8_t> outcomes(batch.examples.size());
      for (std::size_t i = 0; i < batch.examples.size(); ++i) {
        const ExampleId x = batch.examples[i];
        if (x >= task.examples.size()) fail(ErrorCode::Lookup, "unknown example id " + std::to_string(x));
        if (task.examples[x].baseline != regime)
          fail(ErrorCode::Lookup, "example " + std::to_string(x) + " is not in the queried regime");
        std::uint8_t o = u.test(x) ? static_cast<std::uint8_t>(1 - b) : b;
        if (rate > 0.0 && to_unit(hash_combine(noise_key, x)) < rate) o ^= 1;
        outcomes[i] = o;
      }
      out.push_back(std::move(outcomes));
    }
    return out;
  }

 private:
  std::shared_ptr<const SyntheticTask> task_;
};

}  // namespace ruleloc
