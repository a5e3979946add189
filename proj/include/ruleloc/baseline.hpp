#pragma once

// Exhaustive singleton ablation and tiered recall against it.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/localizer.hpp"

namespace ruleloc {

struct BruteForceConfig {
  double tau = 0.2;
  double epsilon = 0.2;
  double alpha = 0.05;
  std::uint32_t samples_per_slice = 64;
  std::uint64_t seed = 0;       // must match the compared search for a shared subset
  std::uint64_t replicate = 1;  // distinct noise stream from the search
};

struct BruteForceResult {
  std::vector<AgonistRecord> agonists;
  std::uint64_t evaluations = 0;
};

// One group evaluation per candidate, on the same compact subset that a
// fixed-subset search with the same seed uses.
inline BruteForceResult brute_force_singletons(std::span<const NeuronCoord> candidates, BehaviorOracle& oracle,
                                               const EvalSubset& subset, Regime regime,
                                               const BruteForceConfig& config) {
  require(!subset.plus.empty() && !subset.minus.empty(), ErrorCode::InvalidArgument,
          "evaluation subset needs examples on both slices");
  const auto fixed = fixed_eval_subset(subset, config.samples_per_slice, config.seed);
  const SliceBatch batches[2] = {{Slice::Associated, fixed.plus}, {Slice::Unrelated, fixed.minus}};
  BruteForceResult result;
  for (const auto& c : candidates) {
    const NeuronCoord group[1] = {c};
    const auto out = oracle.evaluate(group, regime, batches, config.replicate);
    ++result.evaluations;
    const auto e = measure_effect(static_cast<std::uint32_t>(flip_count(out[0], regime)),
                                  static_cast<std::uint32_t>(out[0].size()),
                                  static_cast<std::uint32_t>(flip_count(out[1], regime)),
                                  static_cast<std::uint32_t>(out[1].size()), config.alpha);
    if (e.strength() >= config.tau)
      result.agonists.push_back(make_agonist_record(c, regime, e, config.tau, config.epsilon, false));
  }
  std::sort(result.agonists.begin(), result.agonists.end(),
            [](const AgonistRecord& a, const AgonistRecord& b) { return a.neuron < b.neuron; });
  return result;
}

struct StrengthBin {
  double lo = 0.0;
  double hi = 1.0;
  bool closed_hi = false;

  bool contains(double s) const { return s >= lo && (closed_hi ? s <= hi : s < hi); }
  std::string label() const {
    std::ostringstream ss;
    ss << '[' << lo << ',' << hi << (closed_hi ? ']' : ')');
    return ss.str();
  }
};

// [tau,0.3), [0.3,0.5), [0.5,1.0]; edges at or below tau are dropped.
inline std::vector<StrengthBin> default_bins(double tau) {
  std::vector<double> edges{tau};
  for (double e : {0.3, 0.5, 1.0})
    if (e > tau) edges.push_back(e);
  std::vector<StrengthBin> bins;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) bins.push_back({edges[i], edges[i + 1], i + 2 == edges.size()});
  return bins;
}

struct FoundSet {
  std::string circuit_id;
  Regime regime = Regime::Positive;
  std::vector<AgonistRecord> records;
};

struct TierRecall {
  StrengthBin bin;
  std::size_t recovered = 0;
  std::size_t total = 0;

  // Undefined (nullopt) when the tier has no brute-force positives.
  std::optional<double> recall() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(recovered) / static_cast<double>(total);
  }
};

struct RecallReport {
  std::string task_id;
  std::string circuit_id;
  Regime regime = Regime::Positive;
  std::vector<TierRecall> tiers;
  std::size_t recovered = 0;
  std::size_t total = 0;
  std::vector<NeuronCoord> search_only;  // found by the search, missed by brute force

  std::optional<double> overall() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(recovered) / static_cast<double>(total);
  }
};

inline RecallReport recall_by_tier(const FoundSet& search, const FoundSet& brute, const std::vector<StrengthBin>& bins,
                                   const std::string& task_id = "") {
  if (search.circuit_id != brute.circuit_id)
    fail(ErrorCode::Comparison, "circuit mismatch: '" + search.circuit_id + "' vs '" + brute.circuit_id + "'");
  if (search.regime != brute.regime) fail(ErrorCode::Comparison, "regime mismatch between compared sets");
  std::set<NeuronCoord> found;
  for (const auto& r : search.records) found.insert(r.neuron);
  std::set<NeuronCoord> bf;
  RecallReport rep;
  rep.task_id = task_id;
  rep.circuit_id = brute.circuit_id;
  rep.regime = brute.regime;
  for (const auto& b : bins) rep.tiers.push_back({b, 0, 0});
  for (const auto& r : brute.records) {
    bf.insert(r.neuron);
    const double s = r.effect.strength();
    for (auto& t : rep.tiers) {
      if (!t.bin.contains(s)) continue;
      ++t.total;
      ++rep.total;
      if (found.count(r.neuron)) {
        ++t.recovered;
        ++rep.recovered;
      }
      break;
    }
  }
  for (const auto& c : found)
    if (!bf.count(c)) rep.search_only.push_back(c);
  return rep;
}

inline std::string format_recall(std::size_t recovered, std::size_t total) {
  if (total == 0) return "0/0 (undefined)";
  std::ostringstream ss;
  ss << recovered << '/' << total << " (" << std::fixed << std::setprecision(1)
     << 100.0 * static_cast<double>(recovered) / static_cast<double>(total) << "%)";
  return ss.str();
}

inline void write_recall_csv(std::ostream& out, const std::vector<RecallReport>& reports) {
  out << "task,circuit,regime,overall";
  if (!reports.empty())
    for (const auto& t : reports.front().tiers) out << ',' << '"' << t.bin.label() << '"';
  out << ",search_only\n";
  for (const auto& r : reports) {
    out << r.task_id << ',' << r.circuit_id << ',' << static_cast<int>(label(r.regime)) << ','
        << format_recall(r.recovered, r.total);
    for (const auto& t : r.tiers) out << ',' << format_recall(t.recovered, t.total);
    out << ',' << r.search_only.size() << '\n';
  }
}

inline nlohmann::ordered_json recall_to_json(const RecallReport& r) {
  nlohmann::ordered_json j;
  j["circuit"] = r.circuit_id;
  j["recovered"] = r.recovered;
  j["regime"] = label(r.regime);
  auto only = nlohmann::ordered_json::array();
  for (const auto& c : r.search_only) only.push_back(to_string(c));
  j["search_only"] = only;
  j["task"] = r.task_id;
  auto tiers = nlohmann::ordered_json::array();
  for (const auto& t : r.tiers) {
    nlohmann::ordered_json tj;
    tj["bin"] = t.bin.label();
    tj["recall"] = t.recall() ? nlohmann::ordered_json(*t.recall()) : nlohmann::ordered_json(nullptr);
    tj["recovered"] = t.recovered;
    tj["total"] = t.total;
    tiers.push_back(tj);
  }
  j["tiers"] = tiers;
  j["total"] = r.total;
  return j;
}

}  // namespace ruleloc
