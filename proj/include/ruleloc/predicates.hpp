#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ruleloc/error.hpp"

namespace ruleloc {

enum class ColumnKind : std::uint8_t { Bool, Real };
enum class Provenance : std::uint8_t { Seed, Proposed };
// Output-derived columns read the model's own baseline output and can never
// drive a runtime gate.
enum class Observability : std::uint8_t { Prompt, OutputDerived };

inline std::string_view to_string(ColumnKind k) { return k == ColumnKind::Bool ? "bool" : "real"; }
inline std::string_view to_string(Provenance p) { return p == Provenance::Seed ? "seed" : "proposed"; }
inline std::string_view to_string(Observability o) {
  return o == Observability::Prompt ? "prompt" : "output-derived";
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "bool") return ColumnKind::Bool;
  if (s == "real") return ColumnKind::Real;
  fail(ErrorCode::Parse, "unknown column kind '" + std::string(s) + "'");
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "seed") return Provenance::Seed;
  if (s == "proposed") return Provenance::Proposed;
  fail(ErrorCode::Parse, "unknown provenance '" + std::string(s) + "'");
}

inline Observability parse_observability(std::string_view s) {
  if (s == "prompt") return Observability::Prompt;
  if (s == "output-derived") return Observability::OutputDerived;
  fail(ErrorCode::Parse, "unknown observability '" + std::string(s) + "'");
}

// One named predicate over all examples. Boolean columns store 0/1.
struct PredicateColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Bool;
  Provenance provenance = Provenance::Seed;
  Observability observability = Observability::Prompt;
  std::vector<double> values;

  friend bool operator==(const PredicateColumn&, const PredicateColumn&) = default;
};

}  // namespace ruleloc
