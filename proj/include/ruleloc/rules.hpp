#pragma once

// Splitter and anchored rule extraction over predicate matrices.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/core.hpp"
#include "ruleloc/coverage.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/oracle.hpp"
#include "ruleloc/predicates.hpp"
#include "ruleloc/random.hpp"
#include "ruleloc/stats.hpp"

namespace ruleloc {

enum class Split : std::uint8_t { Train, Validation, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

struct PredicateMatrix {
  std::vector<PredicateColumn> columns;
  std::vector<Split> splits;            // per row
  std::vector<ExampleId> example_ids;   // row -> example id

  static PredicateMatrix make(std::vector<PredicateColumn> columns, std::vector<Split> splits,
                              std::vector<ExampleId> ids = {}) {
    require(!columns.empty(), ErrorCode::EmptyInput, "predicate matrix needs at least one column");
    const std::size_t n = splits.size();
    std::set<std::string> names;
    for (const auto& c : columns) {
      require(names.insert(c.name).second, ErrorCode::InvalidArgument, "duplicate column name '" + c.name + "'");
      require(c.values.size() == n, ErrorCode::InvalidArgument, "column '" + c.name + "' has the wrong length");
    }
    if (ids.empty()) {
      ids.resize(n);
      std::iota(ids.begin(), ids.end(), ExampleId{0});
    }
    require(ids.size() == n, ErrorCode::InvalidArgument, "example id count does not match rows");
    return {std::move(columns), std::move(splits), std::move(ids)};
  }

  std::size_t rows() const { return splits.size(); }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    fail(ErrorCode::Lookup, "unknown predicate column '" + std::string(name) + "'");
  }

  std::vector<std::size_t> rows_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < rows(); ++r)
      if (splits[r] == s) out.push_back(r);
    return out;
  }

  PredicateMatrix restrict_to(std::span<const std::size_t> keep) const {
    PredicateMatrix m;
    m.columns = columns;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      m.columns[c].values.clear();
      for (std::size_t r : keep) m.columns[c].values.push_back(columns[c].values.at(r));
    }
    for (std::size_t r : keep) {
      m.splits.push_back(splits.at(r));
      m.example_ids.push_back(example_ids.at(r));
    }
    return m;
  }
};

// Binary labels whose test-split entries stay sealed until release_test().
class SplitLabels {
 public:
  SplitLabels() = default;
  SplitLabels(std::vector<std::uint8_t> values, std::vector<Split> splits)
      : values_(std::move(values)), splits_(std::move(splits)) {
    require(values_.size() == splits_.size(), ErrorCode::InvalidArgument, "labels and splits differ in length");
  }

  std::size_t size() const { return values_.size(); }
  Split split(std::size_t row) const { return splits_.at(row); }
  bool released() const { return released_; }
  void release_test() { released_ = true; }

  std::uint8_t at(std::size_t row) const {
    if (splits_.at(row) == Split::Test && !released_)
      fail(ErrorCode::TestSplitAccess, "test label of row " + std::to_string(row) + " read before release");
    return values_[row];
  }

 private:
  std::vector<std::uint8_t> values_;
  std::vector<Split> splits_;
  bool released_ = false;
};

enum class Comparator : std::uint8_t { Ge, Le, Eq };

struct Literal {
  std::string column;
  Comparator op = Comparator::Eq;
  double value = 1.0;
  bool boolean = false;  // rendered as `name` / `NOT name`

  bool holds(double v) const {
    switch (op) {
      case Comparator::Ge: return v >= value;
      case Comparator::Le: return v <= value;
      case Comparator::Eq: return v == value;
    }
    return false;
  }

  friend bool operator==(const Literal&, const Literal&) = default;
};

struct RuleClause {
  std::vector<Literal> literals;
  std::size_t depth() const { return literals.size(); }
  friend bool operator==(const RuleClause&, const RuleClause&) = default;
};

enum class RuleRole : std::uint8_t { Splitter, AnchoredForward, AnchoredBackward, FakeControl };

inline std::string_view to_string(RuleRole r) {
  switch (r) {
    case RuleRole::Splitter: return "splitter";
    case RuleRole::AnchoredForward: return "anchored-1to0";
    case RuleRole::AnchoredBackward: return "anchored-0to1";
    case RuleRole::FakeControl: return "fake-control";
  }
  return "splitter";
}

inline RuleRole parse_rule_role(std::string_view s) {
  for (auto r : {RuleRole::Splitter, RuleRole::AnchoredForward, RuleRole::AnchoredBackward, RuleRole::FakeControl})
    if (to_string(r) == s) return r;
  fail(ErrorCode::Parse, "unknown rule role '" + std::string(s) + "'");
}

inline RuleRole anchored_role(Regime r) {
  return r == Regime::Positive ? RuleRole::AnchoredForward : RuleRole::AnchoredBackward;
}

struct SplitScore {
  ConfusionCounts counts;
  double mcc = 0.0;
  friend bool operator==(const SplitScore&, const SplitScore&) = default;
};

struct RuleSet {
  std::vector<RuleClause> clauses;  // OR of conjunctions; empty never fires
  RuleRole role = RuleRole::Splitter;
  std::array<std::optional<SplitScore>, 3> scores;
  bool gate_eligible = false;

  std::size_t literal_count() const {
    std::size_t n = 0;
    for (const auto& c : clauses) n += c.depth();
    return n;
  }
  const std::optional<SplitScore>& score(Split s) const { return scores[static_cast<std::size_t>(s)]; }
  std::optional<SplitScore>& score(Split s) { return scores[static_cast<std::size_t>(s)]; }

  friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

inline std::vector<std::uint8_t> clause_fires(const RuleClause& clause, const PredicateMatrix& m) {
  std::vector<std::uint8_t> out(m.rows(), 1);
  for (const auto& lit : clause.literals) {
    const auto& col = m.columns[m.column_index(lit.column)];
    for (std::size_t r = 0; r < m.rows(); ++r)
      if (out[r] && !lit.holds(col.values[r])) out[r] = 0;
  }
  return out;
}

inline std::vector<std::uint8_t> rule_fires(const RuleSet& rule, const PredicateMatrix& m) {
  std::vector<std::uint8_t> out(m.rows(), 0);
  for (const auto& c : rule.clauses) {
    const auto f = clause_fires(c, m);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] |= f[r];
  }
  return out;
}

inline bool rule_fires_row(const RuleSet& rule, const PredicateMatrix& m, std::size_t row) {
  for (const auto& c : rule.clauses) {
    bool all = true;
    for (const auto& lit : c.literals)
      if (!lit.holds(m.columns[m.column_index(lit.column)].values.at(row))) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

inline ConfusionCounts confusion_on(std::span<const std::uint8_t> fired, const SplitLabels& labels,
                                    std::span<const std::size_t> rows) {
  ConfusionCounts c;
  for (std::size_t r : rows) {
    const bool p = fired[r] != 0, t = labels.at(r) != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

inline double mcc_on(std::span<const std::uint8_t> fired, const SplitLabels& labels,
                     std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  return mcc(confusion_on(fired, labels, rows));
}

// Fills per-split scores; the test split only once its labels are released.
inline void score_rule(RuleSet& rule, const PredicateMatrix& m, const SplitLabels& labels) {
  const auto fired = rule_fires(rule, m);
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    if (s == Split::Test && !labels.released()) continue;
    const auto rows = m.rows_in(s);
    if (rows.empty()) {
      rule.score(s).reset();
      continue;
    }
    const auto c = confusion_on(fired, labels, rows);
    rule.score(s) = SplitScore{c, mcc(c)};
  }
}

// Names of output-derived columns the rule depends on.
inline std::vector<std::string> output_derived_columns(const RuleSet& rule, const PredicateMatrix& m) {
  std::set<std::string> out;
  for (const auto& c : rule.clauses)
    for (const auto& lit : c.literals)
      if (m.columns[m.column_index(lit.column)].observability == Observability::OutputDerived) out.insert(lit.column);
  return {out.begin(), out.end()};
}

struct ClauseConfig {
  std::size_t max_depth = 2;
  std::size_t beam_width = 16;
  std::size_t max_thresholds = 32;
  std::size_t max_eq_values = 8;
  bool prompt_only = false;  // skip output-derived columns
};

struct PoolEntry {
  RuleClause clause;
  std::vector<std::uint8_t> fired;
  double train_mcc = 0.0;
};

namespace detail {

inline std::vector<double> candidate_thresholds(std::vector<double> values, std::size_t cap) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) mids.push_back(values[i] + (values[i + 1] - values[i]) / 2.0);
  if (mids.size() <= cap || cap == 0) return mids;
  std::vector<double> out;
  for (std::size_t i = 0; i < cap; ++i) {
    const auto idx = static_cast<std::size_t>(
        std::lround(static_cast<double>(i) * static_cast<double>(mids.size() - 1) / static_cast<double>(cap - 1)));
    if (out.empty() || out.back() != mids[idx]) out.push_back(mids[idx]);
  }
  return out;
}

inline bool better_entry(const PoolEntry& a, std::size_t ia, const PoolEntry& b, std::size_t ib, double sa,
                         double sb) {
  if (sa != sb) return sa > sb;
  if (a.clause.depth() != b.clause.depth()) return a.clause.depth() < b.clause.depth();
  return ia < ib;
}

}  // namespace detail

// Threshold and equality literals per column, widened by beam-limited
// conjunction, deduplicated by fired signature, scored by train MCC.
inline std::vector<PoolEntry> enumerate_clauses(const PredicateMatrix& m, const SplitLabels& labels,
                                                const ClauseConfig& cfg = {}) {
  require(!m.columns.empty(), ErrorCode::EmptyInput, "predicate matrix has no columns");
  require(labels.size() == m.rows(), ErrorCode::InvalidArgument, "labels do not match matrix rows");
  require(cfg.max_depth >= 1, ErrorCode::InvalidArgument, "max_depth must be at least 1");
  const auto train = m.rows_in(Split::Train);
  std::size_t pos = 0;
  for (std::size_t r : train) pos += labels.at(r) != 0;
  if (pos == 0 || pos == train.size())
    fail(ErrorCode::Extraction, "labels have a single class on the train split");

  std::vector<PoolEntry> pool;
  std::set<std::vector<std::uint8_t>> seen;
  auto add = [&](RuleClause clause) {
    auto fired = clause_fires(clause, m);
    const auto ones = std::count(fired.begin(), fired.end(), 1);
    if (ones == 0 || static_cast<std::size_t>(ones) == fired.size()) return false;
    if (!seen.insert(fired).second) return false;
    const double score = mcc_on(fired, labels, train);
    pool.push_back({std::move(clause), std::move(fired), score});
    return true;
  };

  std::vector<Literal> atoms;
  for (const auto& col : m.columns) {
    if (cfg.prompt_only && col.observability == Observability::OutputDerived) continue;
    if (col.kind == ColumnKind::Bool) {
      atoms.push_back({col.name, Comparator::Eq, 1.0, true});
      atoms.push_back({col.name, Comparator::Eq, 0.0, true});
      continue;
    }
    std::vector<double> vals;
    for (std::size_t r : train) vals.push_back(col.values[r]);
    for (double t : detail::candidate_thresholds(vals, cfg.max_thresholds)) {
      atoms.push_back({col.name, Comparator::Ge, t, false});
      atoms.push_back({col.name, Comparator::Le, t, false});
    }
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    if (vals.size() <= cfg.max_eq_values)
      for (double v : vals) atoms.push_back({col.name, Comparator::Eq, v, false});
  }
  for (const auto& a : atoms) add(RuleClause{{a}});

  std::vector<std::size_t> frontier(pool.size());
  std::iota(frontier.begin(), frontier.end(), 0);
  for (std::size_t depth = 2; depth <= cfg.max_depth && !frontier.empty(); ++depth) {
    std::stable_sort(frontier.begin(), frontier.end(), [&](std::size_t a, std::size_t b) {
      return detail::better_entry(pool[a], a, pool[b], b, pool[a].train_mcc, pool[b].train_mcc);
    });
    if (frontier.size() > cfg.beam_width) frontier.resize(cfg.beam_width);
    std::vector<std::size_t> next;
    for (std::size_t f : frontier) {
      const RuleClause base = pool[f].clause;
      for (const auto& a : atoms) {
        if (std::any_of(base.literals.begin(), base.literals.end(),
                        [&](const Literal& l) { return l.column == a.column && l.op == a.op; }))
          continue;
        RuleClause c = base;
        c.literals.push_back(a);
        if (add(std::move(c))) next.push_back(pool.size() - 1);
      }
    }
    frontier = std::move(next);
  }
  return pool;
}

struct ComposeResult {
  RuleSet rule;
  std::vector<std::size_t> chosen;  // pool indices in acceptance order
  std::vector<double> trace;        // selection-split MCC after each acceptance
};

// Greedy OR-composition on held-out labels. The selection split is
// validation, or train when validation is empty.
inline ComposeResult greedy_or_compose(const std::vector<PoolEntry>& pool, const PredicateMatrix& m,
                                       const SplitLabels& labels, std::size_t seed_k,
                                       RuleRole role = RuleRole::Splitter,
                                       const std::set<std::size_t>& excluded = {}) {
  require(!pool.empty(), ErrorCode::EmptyInput, "clause pool is empty");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!excluded.count(i)) order.push_back(i);
  require(!order.empty(), ErrorCode::EmptyInput, "every pool clause is excluded");
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detail::better_entry(pool[a], a, pool[b], b, pool[a].train_mcc, pool[b].train_mcc);
  });
  if (seed_k > 0 && order.size() > seed_k) order.resize(seed_k);

  auto sel = m.rows_in(Split::Validation);
  if (sel.empty()) sel = m.rows_in(Split::Train);

  ComposeResult res;
  std::size_t first = order.front();
  double best = mcc_on(pool[first].fired, labels, sel);
  for (std::size_t i : order) {
    const double s = mcc_on(pool[i].fired, labels, sel);
    if (detail::better_entry(pool[i], i, pool[first], first, s, best)) {
      first = i;
      best = s;
    }
  }
  std::vector<std::uint8_t> current = pool[first].fired;
  res.chosen.push_back(first);
  res.trace.push_back(best);
  std::set<std::size_t> used{first};
  while (true) {
    std::optional<std::size_t> pick;
    double pick_score = best;
    std::vector<std::uint8_t> trial(current.size());
    for (std::size_t i : order) {
      if (used.count(i)) continue;
      for (std::size_t r = 0; r < trial.size(); ++r) trial[r] = current[r] | pool[i].fired[r];
      const double s = mcc_on(trial, labels, sel);
      if (s <= best + 1e-12) continue;
      if (!pick || detail::better_entry(pool[i], i, pool[*pick], *pick, s, pick_score)) {
        pick = i;
        pick_score = s;
      }
    }
    if (!pick) break;
    for (std::size_t r = 0; r < current.size(); ++r) current[r] |= pool[*pick].fired[r];
    best = pick_score;
    used.insert(*pick);
    res.chosen.push_back(*pick);
    res.trace.push_back(best);
  }
  res.rule.role = role;
  for (std::size_t i : res.chosen) res.rule.clauses.push_back(pool[i].clause);
  res.rule.gate_eligible = output_derived_columns(res.rule, m).empty();
  score_rule(res.rule, m, labels);
  return res;
}

struct SplitterSet {
  std::vector<RuleSet> splitters;  // best held-out MCC first
  std::vector<std::string> notes;  // tie resolutions
};

inline double selection_mcc(const RuleSet& r) {
  if (r.score(Split::Validation)) return r.score(Split::Validation)->mcc;
  return r.score(Split::Train) ? r.score(Split::Train)->mcc : 0.0;
}

// Up to K splitters composed from disjoint clause subsets of one pool.
// Equal held-out MCC is broken by fewer clauses.
inline SplitterSet extract_splitters(const PredicateMatrix& m, const SplitLabels& labels, std::size_t k,
                                     const ClauseConfig& cfg, std::size_t seed_k,
                                     RuleRole role = RuleRole::Splitter) {
  require(k >= 1, ErrorCode::InvalidArgument, "at least one splitter is required");
  const auto pool = enumerate_clauses(m, labels, cfg);
  std::set<std::size_t> used;
  std::vector<RuleSet> found;
  while (found.size() < k && used.size() < pool.size()) {
    auto res = greedy_or_compose(pool, m, labels, seed_k, role, used);
    used.insert(res.chosen.begin(), res.chosen.end());
    found.push_back(std::move(res.rule));
  }
  SplitterSet out;
  std::vector<std::size_t> idx(found.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double sa = selection_mcc(found[a]), sb = selection_mcc(found[b]);
    if (sa != sb) return sa > sb;
    return found[a].clauses.size() < found[b].clauses.size();
  });
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i > 0 && selection_mcc(found[idx[i]]) == selection_mcc(found[idx[i - 1]]))
      out.notes.push_back("splitters " + std::to_string(i - 1) + " and " + std::to_string(i) +
                          " tie on held-out MCC; ordered by clause count");
    out.splitters.push_back(found[idx[i]]);
  }
  return out;
}

// Rows of the matrix in D_b, partitioned by whether the rule fires.
struct InducedSplit {
  std::vector<ExampleId> plus;
  std::vector<ExampleId> minus;
};

inline InducedSplit induce_split(const RuleSet& rule, const PredicateMatrix& m,
                                 std::span<const std::uint8_t> baseline, Regime regime) {
  require(baseline.size() == m.rows(), ErrorCode::InvalidArgument, "baseline labels do not match matrix rows");
  const auto fired = rule_fires(rule, m);
  InducedSplit out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (baseline[r] != label(regime)) continue;
    (fired[r] ? out.plus : out.minus).push_back(m.example_ids[r]);
  }
  if (out.plus.empty() && out.minus.empty())
    fail(ErrorCode::RegimeEmpty, "no examples with baseline label " + std::to_string(label(regime)));
  return out;
}

// Singleton ablation targets: 1 where the outcome leaves the baseline.
inline std::vector<std::uint8_t> flip_targets(const NeuronCoord& neuron, BehaviorOracle& oracle,
                                              std::span<const ExampleId> examples, std::span<const Slice> slices,
                                              Regime regime, std::uint64_t replicate = 0) {
  require(examples.size() == slices.size(), ErrorCode::InvalidArgument, "examples and slices differ in length");
  std::vector<ExampleId> by_slice[2];
  std::vector<std::size_t> pos[2];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int s = slices[i] == Slice::Associated ? 0 : 1;
    by_slice[s].push_back(examples[i]);
    pos[s].push_back(i);
  }
  std::vector<SliceBatch> batches;
  std::vector<int> which;
  for (int s = 0; s < 2; ++s)
    if (!by_slice[s].empty()) {
      batches.push_back({s == 0 ? Slice::Associated : Slice::Unrelated, by_slice[s]});
      which.push_back(s);
    }
  std::vector<std::uint8_t> targets(examples.size(), 0);
  if (batches.empty()) return targets;
  const NeuronCoord group[1] = {neuron};
  const auto out = oracle.evaluate(group, regime, batches, replicate);
  for (std::size_t b = 0; b < batches.size(); ++b)
    for (std::size_t i = 0; i < out[b].size(); ++i)
      targets[pos[which[b]][i]] = out[b][i] != label(regime) ? 1 : 0;
  return targets;
}

struct AnchorConfig {
  ClauseConfig clauses;
  std::size_t seed_k = 8;
  double high_quality_mcc = 0.85;
};

struct AnchorResult {
  NeuronCoord neuron;
  Regime regime = Regime::Positive;
  std::optional<RuleSet> rule;  // empty when targets are degenerate
  std::optional<double> test_mcc;
  bool high_quality = false;
  std::string note;
};

inline AnchorResult anchor_rule(const NeuronCoord& neuron, Regime regime, SplitLabels targets,
                                const PredicateMatrix& m, const AnchorConfig& cfg = {}) {
  AnchorResult res;
  res.neuron = neuron;
  res.regime = regime;
  const auto train = m.rows_in(Split::Train);
  std::size_t pos = 0;
  for (std::size_t r : train) pos += targets.at(r) != 0;
  if (train.empty() || pos == 0 || pos == train.size()) {
    res.note = "degenerate targets on the train split";
    return res;
  }
  auto composed = greedy_or_compose(enumerate_clauses(m, targets, cfg.clauses), m, targets, cfg.seed_k,
                                    anchored_role(regime));
  targets.release_test();
  score_rule(composed.rule, m, targets);
  if (const auto& t = composed.rule.score(Split::Test)) {
    res.test_mcc = t->mcc;
    res.high_quality = t->mcc >= cfg.high_quality_mcc;
  } else {
    res.note = "no test rows";
  }
  res.rule = std::move(composed.rule);
  return res;
}

struct GateDecision {
  bool intervene = false;
  std::vector<NeuronCoord> ablate;  // {neuron} when intervening, empty otherwise
};

inline void require_gate_eligible(const RuleSet& rule, const PredicateMatrix& m) {
  const auto bad = output_derived_columns(rule, m);
  if (!bad.empty())
    fail(ErrorCode::GateIneligible,
         "rule reads output-derived column '" + bad.front() + "'; usable as a diagnostic rule only");
}

inline GateDecision gate_policy(const RuleSet& rule, const NeuronCoord& neuron, const PredicateMatrix& m,
                                std::size_t row) {
  require_gate_eligible(rule, m);
  GateDecision d;
  d.intervene = rule_fires_row(rule, m, row);
  if (d.intervene) d.ablate.push_back(neuron);
  return d;
}

// Examples in D_b whose gated outcome leaves the baseline.
inline std::vector<ExampleId> gate_repairs(const RuleSet& rule, const NeuronCoord& neuron, const PredicateMatrix& m,
                                           BehaviorOracle& oracle, std::span<const std::uint8_t> baseline,
                                           std::span<const Slice> slices, Regime regime) {
  require_gate_eligible(rule, m);
  std::vector<ExampleId> changed;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (baseline[r] != label(regime)) continue;
    const auto d = gate_policy(rule, neuron, m, r);
    const ExampleId id[1] = {m.example_ids[r]};
    const SliceBatch batch[1] = {{slices[r], id}};
    const auto out = oracle.evaluate(d.ablate, regime, batch);
    if (out[0][0] != label(regime)) changed.push_back(id[0]);
  }
  return changed;
}

inline std::vector<std::uint8_t> fake_rule_control(std::vector<std::uint8_t> labels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "fake-rule"));
  rng.shuffle(labels);
  return labels;
}

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
};

// Stratified split: k-center clusters in standardized predicate space, each
// cluster shuffled and cut by the configured fractions.
inline std::vector<Split> assign_splits(const std::vector<PredicateColumn>& columns, std::size_t n_rows,
                                        std::size_t clusters, std::uint64_t seed, SplitFractions f = {}) {
  require(n_rows > 0, ErrorCode::EmptyInput, "no rows to split");
  require(f.train > 0.0 && f.validation >= 0.0 && f.train + f.validation <= 1.0, ErrorCode::InvalidArgument,
          "split fractions must be nonnegative and sum to at most 1");
  DenseMatrix pts(n_rows, std::max<std::size_t>(columns.size(), 1));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& v = columns[c].values;
    require(v.size() == n_rows, ErrorCode::InvalidArgument, "column '" + columns[c].name + "' has the wrong length");
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n_rows);
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n_rows));
    for (std::size_t r = 0; r < n_rows; ++r) pts(r, c) = sd > 0.0 ? (v[r] - mean) / sd : 0.0;
  }
  const auto kc = greedy_k_center(pts, std::clamp<std::size_t>(clusters, 1, n_rows));
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < n_rows; ++r) members[kc.assignment[r]].push_back(r);
  Rng rng(derive_seed(seed, "splits"));
  std::vector<Split> out(n_rows, Split::Test);
  for (auto& [cluster, rows] : members) {
    rng.shuffle(rows);
    const auto m = static_cast<double>(rows.size());
    const auto n_train = static_cast<std::size_t>(std::lround(f.train * m));
    const auto n_val = static_cast<std::size_t>(std::lround((f.train + f.validation) * m)) - n_train;
    for (std::size_t i = 0; i < rows.size(); ++i)
      out[rows[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Validation : Split::Test);
  }
  return out;
}

// Rule language.

inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string to_text(const Literal& l) {
  if (l.boolean && l.op == Comparator::Eq) return (l.value != 0.0 ? "" : "NOT ") + l.column;
  const char* op = l.op == Comparator::Ge ? " >= " : (l.op == Comparator::Le ? " <= " : " = ");
  return l.column + op + format_number(l.value);
}

inline std::string to_text(const RuleSet& rule) {
  if (rule.clauses.empty()) return "IF false THEN fire";
  std::string s = "IF ";
  for (std::size_t i = 0; i < rule.clauses.size(); ++i) {
    if (i) s += " OR ";
    s += '(';
    const auto& lits = rule.clauses[i].literals;
    for (std::size_t j = 0; j < lits.size(); ++j) {
      if (j) s += " AND ";
      s += to_text(lits[j]);
    }
    s += ')';
  }
  return s + " THEN fire";
}

namespace detail {

class RuleLexer {
 public:
  explicit RuleLexer(std::string_view text) : text_(text) {}

  std::string_view next() {
    skip();
    if (pos_ >= text_.size()) return {};
    const std::size_t start = pos_;
    const char c = text_[pos_];
    if (c == '(' || c == ')' || c == '=') {
      ++pos_;
      return text_.substr(start, 1);
    }
    if ((c == '>' || c == '<') && pos_ + 1 < text_.size() && text_[pos_ + 1] == '=') {
      pos_ += 2;
      return text_.substr(start, 2);
    }
    if (word_char(c)) {
      while (pos_ < text_.size() && word_char(text_[pos_])) ++pos_;
      return text_.substr(start, pos_ - start);
    }
    fail(ErrorCode::Parse, "unexpected character '" + std::string(1, c) + "' in rule");
  }

  std::string_view peek() {
    const std::size_t save = pos_;
    const auto t = next();
    pos_ = save;
    return t;
  }

 private:
  static bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' || c == '+';
  }
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  std::string_view text_;
  std::size_t pos_ = 0;
};

inline void expect(RuleLexer& lx, std::string_view want) {
  const auto t = lx.next();
  if (t != want) fail(ErrorCode::Parse, "expected '" + std::string(want) + "' but found '" + std::string(t) + "'");
}

inline double parse_number(std::string_view t) {
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc{} || r.ptr != t.data() + t.size())
    fail(ErrorCode::Parse, "malformed number '" + std::string(t) + "'");
  return v;
}

inline bool keyword(std::string_view t) {
  return t == "IF" || t == "THEN" || t == "AND" || t == "OR" || t == "NOT" || t == "fire" || t.empty();
}

inline Literal parse_literal(RuleLexer& lx) {
  auto t = lx.next();
  if (t == "NOT") {
    const auto name = lx.next();
    if (keyword(name)) fail(ErrorCode::Parse, "NOT must be followed by a column name");
    return {std::string(name), Comparator::Eq, 0.0, true};
  }
  if (keyword(t) || t == "(" || t == ")") fail(ErrorCode::Parse, "expected a literal, found '" + std::string(t) + "'");
  Literal lit{std::string(t), Comparator::Eq, 1.0, true};
  const auto op = lx.peek();
  if (op != ">=" && op != "<=" && op != "=") return lit;
  lx.next();
  const auto value = lx.next();
  if (op == "=" && (value == "true" || value == "false")) {
    lit.value = value == "true" ? 1.0 : 0.0;
    return lit;
  }
  lit.boolean = false;
  lit.op = op == ">=" ? Comparator::Ge : (op == "<=" ? Comparator::Le : Comparator::Eq);
  lit.value = parse_number(value);
  return lit;
}

}  // namespace detail

// Parses the clause structure; role and scores are not part of the text form.
inline RuleSet parse_rule(std::string_view text, RuleRole role = RuleRole::Splitter) {
  detail::RuleLexer lx(text);
  detail::expect(lx, "IF");
  RuleSet rule;
  rule.role = role;
  if (lx.peek() == "false") {
    lx.next();
  } else {
    while (true) {
      RuleClause clause;
      const bool paren = lx.peek() == "(";
      if (paren) lx.next();
      clause.literals.push_back(detail::parse_literal(lx));
      while (lx.peek() == "AND") {
        lx.next();
        clause.literals.push_back(detail::parse_literal(lx));
      }
      if (paren) detail::expect(lx, ")");
      rule.clauses.push_back(std::move(clause));
      if (lx.peek() != "OR") break;
      lx.next();
    }
  }
  detail::expect(lx, "THEN");
  detail::expect(lx, "fire");
  if (!lx.peek().empty()) fail(ErrorCode::Parse, "trailing text after rule");
  return rule;
}

inline std::string_view to_string(Comparator c) {
  return c == Comparator::Ge ? ">=" : (c == Comparator::Le ? "<=" : "=");
}

inline Comparator parse_comparator(std::string_view s) {
  if (s == ">=") return Comparator::Ge;
  if (s == "<=") return Comparator::Le;
  if (s == "=") return Comparator::Eq;
  fail(ErrorCode::Parse, "unknown comparator '" + std::string(s) + "'");
}

inline nlohmann::ordered_json rule_to_json(const RuleSet& r) {
  nlohmann::ordered_json j;
  auto clauses = nlohmann::ordered_json::array();
  for (const auto& c : r.clauses) {
    auto lits = nlohmann::ordered_json::array();
    for (const auto& l : c.literals)
      lits.push_back({{"boolean", l.boolean}, {"column", l.column}, {"op", to_string(l.op)}, {"value", l.value}});
    clauses.push_back(lits);
  }
  j["clauses"] = clauses;
  j["gate_eligible"] = r.gate_eligible;
  j["role"] = to_string(r.role);
  nlohmann::ordered_json splits = nlohmann::ordered_json::object();
  for (Split s : {Split::Test, Split::Train, Split::Validation})
    if (const auto& sc = r.score(s))
      splits[std::string(to_string(s))] = {{"fn", sc->counts.fn}, {"fp", sc->counts.fp}, {"mcc", sc->mcc},
                                           {"tn", sc->counts.tn}, {"tp", sc->counts.tp}};
  j["splits"] = splits;
  j["text"] = to_text(r);
  return j;
}

inline RuleSet rule_from_json(const nlohmann::json& j) {
  try {
    RuleSet r;
    r.role = parse_rule_role(j.at("role").get<std::string>());
    r.gate_eligible = j.at("gate_eligible").get<bool>();
    for (const auto& c : j.at("clauses")) {
      RuleClause clause;
      for (const auto& l : c)
        clause.literals.push_back({l.at("column").get<std::string>(), parse_comparator(l.at("op").get<std::string>()),
                                   l.at("value").get<double>(), l.at("boolean").get<bool>()});
      r.clauses.push_back(std::move(clause));
    }
    for (Split s : {Split::Train, Split::Validation, Split::Test}) {
      const auto key = std::string(to_string(s));
      if (!j.at("splits").contains(key)) continue;
      const auto& sj = j["splits"][key];
      SplitScore sc;
      sc.counts = {sj.at("tp").get<std::uint64_t>(), sj.at("tn").get<std::uint64_t>(), sj.at("fp").get<std::uint64_t>(),
                   sj.at("fn").get<std::uint64_t>()};
      sc.mcc = sj.at("mcc").get<double>();
      r.score(s) = sc;
    }
    if (j.contains("text") && parse_rule(j["text"].get<std::string>(), r.role).clauses != r.clauses)
      fail(ErrorCode::Parse, "rule text disagrees with its clause list");
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed rule JSON: ") + e.what());
  }
}

}  // namespace ruleloc
