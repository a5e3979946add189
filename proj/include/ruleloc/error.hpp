#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ruleloc {

enum class ErrorCode {
  EmptyInput,
  UndefinedDominance,
  InvalidArgument,
  Lookup,
  Infeasible,
  BudgetExhausted,
  Regime,
  Extraction,
  Comparison,
  GateIneligible,
  RegimeEmpty,
  UndefinedScore,
  TestSplitAccess,
  Parse,
  Io,
  Stage,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::UndefinedDominance: return "undefined-dominance";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Lookup: return "lookup";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::BudgetExhausted: return "budget-exhausted";
    case ErrorCode::Regime: return "regime";
    case ErrorCode::Extraction: return "extraction";
    case ErrorCode::Comparison: return "comparison";
    case ErrorCode::GateIneligible: return "gate-ineligible";
    case ErrorCode::RegimeEmpty: return "regime-empty";
    case ErrorCode::UndefinedScore: return "undefined-score";
    case ErrorCode::TestSplitAccess: return "test-split-access";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    case ErrorCode::Stage: return "stage";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ruleloc
