#pragma once

// Confidence-pruned binary group search over one layer's candidates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/core.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/oracle.hpp"
#include "ruleloc/random.hpp"
#include "ruleloc/stats.hpp"

namespace ruleloc {

enum class BudgetMode : std::uint8_t { FixedPerNode, HalvingSpend, TreeUniform };
enum class ResamplePolicy : std::uint8_t { FixedSubset, FreshPerNode };

inline std::string_view to_string(BudgetMode m) {
  switch (m) {
    case BudgetMode::FixedPerNode: return "fixed-per-node";
    case BudgetMode::HalvingSpend: return "halving-spend";
    case BudgetMode::TreeUniform: return "tree-uniform";
  }
  return "fixed-per-node";
}

inline BudgetMode parse_budget_mode(std::string_view s) {
  if (s == "fixed-per-node") return BudgetMode::FixedPerNode;
  if (s == "halving-spend") return BudgetMode::HalvingSpend;
  if (s == "tree-uniform") return BudgetMode::TreeUniform;
  fail(ErrorCode::Parse, "unknown budget mode '" + std::string(s) + "'");
}

inline std::string_view to_string(ResamplePolicy p) {
  return p == ResamplePolicy::FixedSubset ? "fixed-subset" : "fresh-per-node";
}

inline ResamplePolicy parse_resample_policy(std::string_view s) {
  if (s == "fixed-subset") return ResamplePolicy::FixedSubset;
  if (s == "fresh-per-node") return ResamplePolicy::FreshPerNode;
  fail(ErrorCode::Parse, "unknown resample policy '" + std::string(s) + "'");
}

struct SearchConfig {
  double tau = 0.2;
  double epsilon = 0.2;
  double alpha = 0.05;
  BudgetMode budget_mode = BudgetMode::FixedPerNode;
  std::uint32_t samples_per_slice = 64;
  ResamplePolicy resample_policy = ResamplePolicy::FixedSubset;
  // Compute heuristic: prune on UCB < search_epsilon instead of tau.
  std::optional<double> search_epsilon;
  // Accept singletons on a Bonferroni-corrected lower bound instead of the
  // point estimate.
  bool strict = false;
  bool flag_catastrophic = true;
  std::uint32_t catastrophic_repeats = 3;
  double catastrophic_tol = 0.05;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;

  void validate() const {
    auto unit = [](double v) { return v > 0.0 && v < 1.0; };
    require(unit(tau), ErrorCode::InvalidArgument, "tau must lie in (0, 1)");
    require(unit(epsilon), ErrorCode::InvalidArgument, "epsilon must lie in (0, 1)");
    require(unit(alpha), ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    require(samples_per_slice > 0, ErrorCode::InvalidArgument, "samples_per_slice must be positive");
    if (search_epsilon)
      require(*search_epsilon > 0.0 && *search_epsilon <= tau, ErrorCode::InvalidArgument,
              "search_epsilon must lie in (0, tau]");
  }

  double prune_threshold() const { return search_epsilon.value_or(tau); }
};

struct EvalSubset {
  std::vector<ExampleId> plus;
  std::vector<ExampleId> minus;
};

enum class Verdict : std::uint8_t { Pruned, Split, Accepted, Rejected };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pruned: return "pruned";
    case Verdict::Split: return "split";
    case Verdict::Accepted: return "accepted-singleton";
    case Verdict::Rejected: return "rejected-singleton";
  }
  return "pruned";
}

struct SearchNode {
  std::uint32_t span_begin = 0;
  std::uint32_t span_end = 0;
  std::uint32_t depth = 0;
  std::uint64_t heap_id = 1;
  double alpha = 0.0;
  GroupEffect effect;
  Verdict verdict = Verdict::Pruned;

  std::uint32_t size() const noexcept { return span_end - span_begin; }
};

struct SearchStats {
  std::uint64_t group_evaluations = 0;  // every oracle call made by the run
  std::uint64_t visited = 0;
  std::uint64_t pruned = 0;
  std::uint64_t split = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t catastrophic_checks = 0;
  std::vector<std::uint64_t> visited_per_depth;
  std::vector<std::uint64_t> pruned_per_depth;
  double wall_seconds = 0.0;  // metadata only

  void merge(const SearchStats& o) {
    group_evaluations += o.group_evaluations;
    visited += o.visited;
    pruned += o.pruned;
    split += o.split;
    accepted += o.accepted;
    rejected += o.rejected;
    catastrophic_checks += o.catastrophic_checks;
    auto add = [](std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
      if (a.size() < b.size()) a.resize(b.size(), 0);
      for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
    };
    add(visited_per_depth, o.visited_per_depth);
    add(pruned_per_depth, o.pruned_per_depth);
  }
};

struct SearchResult {
  std::vector<AgonistRecord> agonists;  // sorted by coordinate
  SearchStats stats;
  std::vector<SearchNode> tree;  // pre-order
};

// Child budgets for a node. tree-uniform spends the total evenly over the
// 2N - 1 nodes of the full potential tree.
inline std::pair<double, double> allocate_budget(double parent_alpha, BudgetMode mode, double configured_alpha,
                                                 std::size_t n_candidates) {
  switch (mode) {
    case BudgetMode::FixedPerNode: return {configured_alpha, configured_alpha};
    case BudgetMode::HalvingSpend: return {parent_alpha / 2.0, parent_alpha / 2.0};
    case BudgetMode::TreeUniform: {
      const double a = configured_alpha / static_cast<double>(2 * n_candidates - 1);
      return {a, a};
    }
  }
  return {configured_alpha, configured_alpha};
}

inline double root_budget(BudgetMode mode, double configured_alpha, std::size_t n_candidates) {
  return mode == BudgetMode::TreeUniform ? configured_alpha / static_cast<double>(2 * n_candidates - 1)
                                         : configured_alpha;
}

// Always-catastrophic heuristic: accuracy at most tol on both slices in
// every repeat. Each repeat draws samples with replacement.
inline bool detect_catastrophic(const NeuronCoord& neuron, BehaviorOracle& oracle, const EvalSubset& subset,
                                Regime regime, std::uint32_t repeats, double tol, std::uint32_t samples_per_slice,
                                std::uint64_t seed, std::uint64_t* evaluations = nullptr) {
  if (regime != Regime::Positive)
    fail(ErrorCode::Regime, "catastrophic detection is defined only for the baseline-positive regime");
  require(repeats > 0, ErrorCode::InvalidArgument, "repeats must be positive");
  require(!subset.plus.empty() && !subset.minus.empty(), ErrorCode::InvalidArgument,
          "catastrophic detection needs both slices");
  const NeuronCoord group[1] = {neuron};
  for (std::uint32_t r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, "catastrophic", r));
    auto draw = [&](const std::vector<ExampleId>& pool) {
      std::vector<ExampleId> out(samples_per_slice);
      for (auto& x : out) x = pool[rng.index(pool.size())];
      return out;
    };
    const auto plus = draw(subset.plus);
    const auto minus = draw(subset.minus);
    const SliceBatch batches[2] = {{Slice::Associated, plus}, {Slice::Unrelated, minus}};
    const auto out = oracle.evaluate(group, regime, batches, derive_seed(seed, "catastrophic-replicate", r));
    if (evaluations) *evaluations += 1;
    if (accuracy(out[0]) > tol || accuracy(out[1]) > tol) return false;
  }
  return true;
}

// The compact subset reused by every node under fixed-subset resampling: at
// most samples_per_slice examples per slice, seeded.
inline EvalSubset fixed_eval_subset(const EvalSubset& subset, std::uint32_t samples_per_slice, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "subset"));
  auto shrink = [&](const std::vector<ExampleId>& pool) {
    if (pool.size() <= samples_per_slice) return pool;
    std::vector<ExampleId> out;
    for (std::size_t i : rng.sample_without_replacement(pool.size(), samples_per_slice)) out.push_back(pool[i]);
    std::sort(out.begin(), out.end());
    return out;
  };
  EvalSubset out;
  out.plus = shrink(subset.plus);
  out.minus = shrink(subset.minus);
  return out;
}

namespace detail {

class ChaRun {
 public:
  ChaRun(std::span<const NeuronCoord> candidates, BehaviorOracle& oracle, const EvalSubset& subset, Regime regime,
         const SearchConfig& config)
      : candidates_(candidates), oracle_(oracle), regime_(regime), config_(config), subset_(subset) {
    if (config_.resample_policy == ResamplePolicy::FixedSubset) {
      auto fixed = fixed_eval_subset(subset, config_.samples_per_slice, config_.seed);
      fixed_plus_ = std::move(fixed.plus);
      fixed_minus_ = std::move(fixed.minus);
    }
  }

  struct Part {
    std::vector<SearchNode> tree;
    std::vector<AgonistRecord> agonists;
    SearchStats stats;
  };

  Part run(std::uint32_t begin, std::uint32_t end, std::uint32_t depth, std::uint64_t heap_id, double alpha,
           unsigned parallel_depth) const {
    Part part;
    SearchNode node;
    node.span_begin = begin;
    node.span_end = end;
    node.depth = depth;
    node.heap_id = heap_id;
    node.alpha = alpha;
    if (!(alpha > 1e-300))
      fail(ErrorCode::BudgetExhausted, "confidence budget exhausted at " + describe(node));

    node.effect = measure(node);
    part.stats.group_evaluations += 1;
    part.stats.visited += 1;
    bump(part.stats.visited_per_depth, depth);

    const std::size_t node_index = part.tree.size();
    part.tree.push_back(node);
    if (node.effect.ucb() < config_.prune_threshold()) {
      part.tree[node_index].verdict = Verdict::Pruned;
      part.stats.pruned += 1;
      bump(part.stats.pruned_per_depth, depth);
      return part;
    }
    if (node.size() == 1) {
      const bool accept = config_.strict
                              ? group_lcb(node.effect, config_.alpha / static_cast<double>(candidates_.size())) >=
                                    config_.tau
                              : node.effect.strength() >= config_.tau;
      part.tree[node_index].verdict = accept ? Verdict::Accepted : Verdict::Rejected;
      if (accept) {
        part.stats.accepted += 1;
        const NeuronCoord neuron = candidates_[begin];
        bool catastrophic = false;
        if (config_.flag_catastrophic && regime_ == Regime::Positive &&
            node.effect.selectivity() < config_.epsilon) {
          try {
            catastrophic = detect_catastrophic(neuron, oracle_, subset_, regime_, config_.catastrophic_repeats,
                                               config_.catastrophic_tol, config_.samples_per_slice,
                                               derive_seed(config_.seed, "node", heap_id),
                                               &part.stats.group_evaluations);
          } catch (const Error& e) {
            throw Error(e.code(), "catastrophic check at " + describe(node) + ": " + e.what());
          }
          part.stats.catastrophic_checks += 1;
        }
        part.agonists.push_back(
            make_agonist_record(neuron, regime_, node.effect, config_.tau, config_.epsilon, catastrophic));
      } else {
        part.stats.rejected += 1;
      }
      return part;
    }

    part.tree[node_index].verdict = Verdict::Split;
    part.stats.split += 1;
    const std::uint32_t mid = begin + (node.size() + 1) / 2;  // left gets the ceiling
    const auto budgets = allocate_budget(alpha, config_.budget_mode, config_.alpha, candidates_.size());
    const double alpha_left = budgets.first;
    const double alpha_right = budgets.second;
    Part left, right;
    if (depth < parallel_depth) {
      auto future = std::async(std::launch::async, [&, mid, alpha_right] {
        return run(mid, end, depth + 1, 2 * heap_id + 1, alpha_right, parallel_depth);
      });
      left = run(begin, mid, depth + 1, 2 * heap_id, alpha_left, parallel_depth);
      right = future.get();
    } else {
      left = run(begin, mid, depth + 1, 2 * heap_id, alpha_left, parallel_depth);
      right = run(mid, end, depth + 1, 2 * heap_id + 1, alpha_right, parallel_depth);
    }
    for (Part* child : {&left, &right}) {
      part.tree.insert(part.tree.end(), child->tree.begin(), child->tree.end());
      part.agonists.insert(part.agonists.end(), child->agonists.begin(), child->agonists.end());
      part.stats.merge(child->stats);
    }
    return part;
  }

 private:
  std::vector<ExampleId> shrink(const std::vector<ExampleId>& pool, Rng& rng) const {
    if (pool.size() <= config_.samples_per_slice) return pool;
    std::vector<ExampleId> out;
    for (std::size_t i : rng.sample_without_replacement(pool.size(), config_.samples_per_slice))
      out.push_back(pool[i]);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::string describe(const SearchNode& node) const {
    return "node " + std::to_string(node.heap_id) + " span [" + std::to_string(node.span_begin) + ", " +
           std::to_string(node.span_end) + ") depth " + std::to_string(node.depth);
  }

  static void bump(std::vector<std::uint64_t>& hist, std::uint32_t depth) {
    if (hist.size() <= depth) hist.resize(depth + 1, 0);
    hist[depth] += 1;
  }

  GroupEffect measure(const SearchNode& node) const {
    std::vector<ExampleId> fresh_plus, fresh_minus;
    const std::vector<ExampleId>* plus = &fixed_plus_;
    const std::vector<ExampleId>* minus = &fixed_minus_;
    if (config_.resample_policy == ResamplePolicy::FreshPerNode) {
      Rng rng(derive_seed(config_.seed, "node", node.heap_id));
      fresh_plus = shrink(subset_.plus, rng);
      fresh_minus = shrink(subset_.minus, rng);
      plus = &fresh_plus;
      minus = &fresh_minus;
    }
    const auto group = candidates_.subspan(node.span_begin, node.size());
    const SliceBatch batches[2] = {{Slice::Associated, *plus}, {Slice::Unrelated, *minus}};
    std::vector<std::vector<std::uint8_t>> out;
    try {
      out = oracle_.evaluate(group, regime_, batches, config_.replicate);
    } catch (const Error& e) {
      throw Error(e.code(), "oracle failure at " + describe(node) + ": " + e.what());
    }
    return measure_effect(static_cast<std::uint32_t>(flip_count(out[0], regime_)),
                          static_cast<std::uint32_t>(out[0].size()),
                          static_cast<std::uint32_t>(flip_count(out[1], regime_)),
                          static_cast<std::uint32_t>(out[1].size()), node.alpha);
  }

  std::span<const NeuronCoord> candidates_;
  BehaviorOracle& oracle_;
  Regime regime_;
  SearchConfig config_;
  const EvalSubset& subset_;
  std::vector<ExampleId> fixed_plus_;
  std::vector<ExampleId> fixed_minus_;
};

}  // namespace detail

inline SearchResult cha_search(std::span<const NeuronCoord> candidates, BehaviorOracle& oracle,
                               const EvalSubset& subset, Regime regime, const SearchConfig& config) {
  config.validate();
  require(!candidates.empty(), ErrorCode::InvalidArgument, "cha_search needs at least one candidate");
  require(!subset.plus.empty() && !subset.minus.empty(), ErrorCode::InvalidArgument,
          "evaluation subset needs examples on both slices");
  const auto start = std::chrono::steady_clock::now();
  detail::ChaRun run(candidates, oracle, subset, regime, config);
  unsigned parallel_depth = 0;
  while ((1u << parallel_depth) < config.threads && parallel_depth < 16) ++parallel_depth;
  const double root_alpha = root_budget(config.budget_mode, config.alpha, candidates.size());
  auto part = run.run(0, static_cast<std::uint32_t>(candidates.size()), 0, 1, root_alpha, parallel_depth);
  if (config.budget_mode == BudgetMode::TreeUniform) {
    const double spent = root_alpha * static_cast<double>(part.stats.visited);
    if (spent > config.alpha * (1.0 + 1e-9)) fail(ErrorCode::BudgetExhausted, "tree-uniform ledger overspent");
  }
  SearchResult result;
  result.tree = std::move(part.tree);
  result.agonists = std::move(part.agonists);
  std::sort(result.agonists.begin(), result.agonists.end(),
            [](const AgonistRecord& a, const AgonistRecord& b) { return a.neuron < b.neuron; });
  result.stats = part.stats;
  result.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline nlohmann::ordered_json node_to_json(const SearchNode& n, std::span<const NeuronCoord> candidates) {
  nlohmann::ordered_json j;
  j["alpha"] = n.alpha;
  j["delta_minus"] = n.effect.delta_minus;
  j["delta_plus"] = n.effect.delta_plus;
  j["depth"] = n.depth;
  j["first"] = to_string(candidates[n.span_begin]);
  j["flips_minus"] = n.effect.flips_minus;
  j["flips_plus"] = n.effect.flips_plus;
  j["heap_id"] = n.heap_id;
  j["last"] = to_string(candidates[n.span_end - 1]);
  j["n_minus"] = n.effect.n_minus;
  j["n_plus"] = n.effect.n_plus;
  j["span"] = {n.span_begin, n.span_end};
  j["ucb_minus"] = n.effect.ucb_minus;
  j["ucb_plus"] = n.effect.ucb_plus;
  j["verdict"] = std::string(to_string(n.verdict));
  return j;
}

inline void write_tree_jsonl(std::ostream& out, const std::vector<SearchNode>& tree,
                             std::span<const NeuronCoord> candidates) {
  for (const auto& n : tree) out << node_to_json(n, candidates).dump() << '\n';
}

inline void write_agonists_csv(std::ostream& out, const std::vector<AgonistRecord>& records) {
  out << "neuron,regime,delta_plus,delta_minus,strength,selectivity,catastrophic,selective\n";
  for (const auto& r : records)
    out << to_string(r.neuron) << ',' << static_cast<int>(label(r.regime)) << ',' << r.effect.delta_plus << ','
        << r.effect.delta_minus << ',' << r.effect.strength() << ',' << r.effect.selectivity() << ','
        << (r.catastrophic ? 1 : 0) << ',' << (r.selective ? 1 : 0) << '\n';
}

inline nlohmann::ordered_json stats_to_json(const SearchStats& s) {
  nlohmann::ordered_json j;
  j["accepted"] = s.accepted;
  j["catastrophic_checks"] = s.catastrophic_checks;
  j["group_evaluations"] = s.group_evaluations;
  j["pruned"] = s.pruned;
  j["pruned_per_depth"] = s.pruned_per_depth;
  j["rejected"] = s.rejected;
  j["split"] = s.split;
  j["visited"] = s.visited;
  j["visited_per_depth"] = s.visited_per_depth;
  return j;
}

}  // namespace ruleloc
