#pragma once

// Domain types and pure metrics shared by every module.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ruleloc/error.hpp"

namespace ruleloc {

using ExampleId = std::uint32_t;

// One ablatable scalar coordinate: channel `channel` of the MLP write at
// layer `layer`. Ordered lexicographically by (layer, channel).
struct NeuronCoord {
  std::uint32_t layer = 0;
  std::uint32_t channel = 0;

  friend auto operator<=>(const NeuronCoord&, const NeuronCoord&) = default;
};

// "m<layer>:<channel>", e.g. "m4:3206".
inline std::string to_string(const NeuronCoord& c) {
  return "m" + std::to_string(c.layer) + ":" + std::to_string(c.channel);
}

inline NeuronCoord parse_coord(std::string_view text) {
  auto bad = [&]() { fail(ErrorCode::Parse, "malformed neuron coordinate '" + std::string(text) + "'"); };
  if (text.size() < 4 || text.front() != 'm') bad();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) bad();
  NeuronCoord out;
  const char* first = text.data() + 1;
  const char* mid = text.data() + colon;
  const char* last = text.data() + text.size();
  auto r1 = std::from_chars(first, mid, out.layer);
  if (r1.ec != std::errc() || r1.ptr != mid || first == mid) bad();
  auto r2 = std::from_chars(mid + 1, last, out.channel);
  if (r2.ec != std::errc() || r2.ptr != last || mid + 1 == last) bad();
  return out;
}

// Baseline regime b: the un-intervened outcome shared by the evaluated
// examples. Positive (b=1) measures 1->0 flips, Negative (b=0) measures 0->1.
enum class Regime : std::uint8_t { Negative = 0, Positive = 1 };

inline constexpr std::uint8_t label(Regime r) noexcept { return static_cast<std::uint8_t>(r); }

inline constexpr Regime regime_from_label(int b) {
  if (b != 0 && b != 1) fail(ErrorCode::InvalidArgument, "baseline label must be 0 or 1");
  return b == 1 ? Regime::Positive : Regime::Negative;
}

inline std::string_view to_string(Regime r) { return r == Regime::Positive ? "positive" : "negative"; }

inline std::string_view direction(Regime r) { return r == Regime::Positive ? "1->0" : "0->1"; }

enum class Slice : std::uint8_t { Associated, Unrelated };

inline std::string_view to_string(Slice s) { return s == Slice::Associated ? "+" : "-"; }

// Slice flip rates of one ablated group, with the counts they came from so
// that confidence bounds are always recomputable.
struct GroupEffect {
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  std::uint32_t flips_plus = 0;
  std::uint32_t flips_minus = 0;
  std::uint32_t n_plus = 0;
  std::uint32_t n_minus = 0;
  double ucb_plus = 0.0;
  double ucb_minus = 0.0;

  double strength() const noexcept { return std::max(delta_plus, delta_minus); }
  double selectivity() const noexcept { return std::abs(delta_plus - delta_minus); }
  double signed_selectivity() const noexcept { return delta_plus - delta_minus; }
  double ucb() const noexcept { return std::max(ucb_plus, ucb_minus); }

  friend bool operator==(const GroupEffect&, const GroupEffect&) = default;
};

inline bool valid(const GroupEffect& e) noexcept {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in_unit(e.delta_plus) && in_unit(e.delta_minus) && in_unit(e.ucb_plus) && in_unit(e.ucb_minus) &&
         e.ucb_plus >= e.delta_plus && e.ucb_minus >= e.delta_minus;
}

struct StrengthSelectivity {
  double strength = 0.0;
  double sel_abs = 0.0;
  double sel_signed = 0.0;
};

inline StrengthSelectivity strength_and_selectivity(const GroupEffect& e) {
  return {e.strength(), e.selectivity(), e.signed_selectivity()};
}

// Same quantities from raw slice flip rates.
inline StrengthSelectivity strength_and_selectivity(double delta_plus, double delta_minus) {
  GroupEffect e;
  e.delta_plus = delta_plus;
  e.delta_minus = delta_minus;
  return strength_and_selectivity(e);
}

// Slice accuracy under an ablation, a_S = E[C_S = 1], from a flip rate.
inline double accuracy_from_flip_rate(double flip_rate, Regime r) noexcept {
  return r == Regime::Positive ? 1.0 - flip_rate : flip_rate;
}

inline double flip_rate_from_accuracy(double accuracy, Regime r) noexcept {
  return r == Regime::Positive ? 1.0 - accuracy : accuracy;
}

// Accuracy gap a_- - a_+ as reported in ablation tables.
inline double accuracy_gap(const GroupEffect& e, Regime r) noexcept {
  return accuracy_from_flip_rate(e.delta_minus, r) - accuracy_from_flip_rate(e.delta_plus, r);
}

struct AgonistRecord {
  NeuronCoord neuron;
  Regime regime = Regime::Positive;
  GroupEffect effect;
  bool catastrophic = false;
  bool selective = false;

  friend bool operator==(const AgonistRecord&, const AgonistRecord&) = default;
};

// Selectivity is classified at construction from the configured epsilon; the
// catastrophic flag only survives when the record is strong and non-selective.
inline AgonistRecord make_agonist_record(NeuronCoord neuron, Regime regime, const GroupEffect& effect, double tau,
                                         double epsilon, bool catastrophic_observed) {
  AgonistRecord rec;
  rec.neuron = neuron;
  rec.regime = regime;
  rec.effect = effect;
  rec.selective = effect.selectivity() >= epsilon;
  rec.catastrophic = catastrophic_observed && effect.strength() >= tau && !rec.selective;
  return rec;
}

inline double flip_rate(std::span<const std::uint8_t> outcomes, Regime regime) {
  require(!outcomes.empty(), ErrorCode::EmptyInput, "flip_rate needs at least one outcome");
  const std::uint8_t b = label(regime);
  std::size_t flips = 0;
  for (std::uint8_t o : outcomes) flips += (o != b) ? 1 : 0;
  return static_cast<double>(flips) / static_cast<double>(outcomes.size());
}

inline std::size_t flip_count(std::span<const std::uint8_t> outcomes, Regime regime) {
  const std::uint8_t b = label(regime);
  return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [b](auto o) { return o != b; }));
}

inline double accuracy(std::span<const std::uint8_t> outcomes) {
  require(!outcomes.empty(), ErrorCode::EmptyInput, "accuracy needs at least one outcome");
  const auto ones = std::count(outcomes.begin(), outcomes.end(), std::uint8_t{1});
  return static_cast<double>(ones) / static_cast<double>(outcomes.size());
}

// m-way dominance: the largest share of the group's strength carried by a
// subset of at most m members. A group is (m, rho)-overtopped iff the
// ratio is >= rho.
inline double dominance_ratio(double group_strength, const std::map<std::vector<NeuronCoord>, double>& member_strengths,
                              std::size_t m) {
  require(m >= 1, ErrorCode::InvalidArgument, "dominance order m must be positive");
  if (!(group_strength > 0.0)) fail(ErrorCode::UndefinedDominance, "group strength must be positive");
  double best = 0.0;
  for (const auto& [subset, strength] : member_strengths) {
    require(!subset.empty() && subset.size() <= m, ErrorCode::InvalidArgument,
            "dominance subsets must have between 1 and m members");
    best = std::max(best, strength / group_strength);
  }
  return best;
}

inline bool overtopped(double group_strength, const std::map<std::vector<NeuronCoord>, double>& member_strengths,
                       std::size_t m, double rho) {
  return dominance_ratio(group_strength, member_strengths, m) >= rho;
}

// |A ∩ B| / |A ∪ B|; two empty sets give 0.
inline double jaccard(const std::set<NeuronCoord>& a, const std::set<NeuronCoord>& b) {
  std::size_t common = 0;
  for (const auto& c : a) common += b.count(c);
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

}  // namespace ruleloc
