#pragma once

// Run configuration: every module parameter plus one master seed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/candidates.hpp"
#include "ruleloc/coverage.hpp"
#include "ruleloc/localizer.hpp"
#include "ruleloc/manifest.hpp"
#include "ruleloc/rules.hpp"

namespace ruleloc {

inline constexpr int kConfigSchemaVersion = 1;

enum class SplitMethod : std::uint8_t { Rule, Spectral, FakeRule, Planted };
enum class ReducerKind : std::uint8_t { GroundTruth, Surrogate };

inline std::string_view to_string(SplitMethod m) {
  switch (m) {
    case SplitMethod::Rule: return "rule";
    case SplitMethod::Spectral: return "spectral";
    case SplitMethod::FakeRule: return "fake-rule";
    case SplitMethod::Planted: return "planted";
  }
  return "rule";
}

inline SplitMethod parse_split_method(std::string_view s) {
  for (auto m : {SplitMethod::Rule, SplitMethod::Spectral, SplitMethod::FakeRule, SplitMethod::Planted})
    if (to_string(m) == s) return m;
  fail(ErrorCode::Parse, "unknown split method '" + std::string(s) + "'");
}

inline std::string_view to_string(ReducerKind k) { return k == ReducerKind::GroundTruth ? "ground-truth" : "surrogate"; }

inline ReducerKind parse_reducer_kind(std::string_view s) {
  if (s == "ground-truth") return ReducerKind::GroundTruth;
  if (s == "surrogate") return ReducerKind::Surrogate;
  fail(ErrorCode::Parse, "unknown reducer '" + std::string(s) + "'");
}

inline PlanKind parse_plan_kind(std::string_view s) {
  if (s == "spectral") return PlanKind::Spectral;
  if (s == "random") return PlanKind::Random;
  fail(ErrorCode::Parse, "unknown coverage plan '" + std::string(s) + "'");
}

struct StageToggles {
  bool reduce = true;
  bool coverage = true;
  bool anchor = true;
};

struct RulesParams {
  ClauseConfig clauses;
  std::size_t seed_k = 8;
  std::size_t splitters = 3;
  std::size_t split_clusters = 8;
  SplitFractions fractions;
  double high_quality_mcc = 0.85;
  std::vector<double> thresholds{0.80, 0.85, 0.90, 0.95, 0.99};
};

struct CoverageParams {
  CoverageConfig plan{8, 8, 24, 0.2, 0.5, FirstCenter::FarthestFromMean, 0};
  LatentEmbeddingParams embedding;
};

struct ReduceParams {
  ReducerKind kind = ReducerKind::GroundTruth;
  std::size_t budget = 256;
  double leak_rate = 0.0;
  std::uint32_t attention_channels = 0;
  SurrogateParams surrogate;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::string experiment = "e0";
  std::uint64_t seed = 0;
  PlantSpec task;
  std::optional<std::string> task_manifest;
  StageToggles stages;
  SplitMethod split = SplitMethod::Rule;
  PlanKind coverage_kind = PlanKind::Spectral;
  std::vector<Regime> regimes{Regime::Positive, Regime::Negative};
  RulesParams rules;
  CoverageParams coverage;
  ReduceParams reduce;
  SearchConfig search;
  std::size_t seeds = 20;  // Monte Carlo repetitions for e1 and e3
  std::string output_dir = "runs";
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SearchConfig& s) {
  nlohmann::ordered_json j;
  j["alpha"] = s.alpha;
  j["budget_mode"] = to_string(s.budget_mode);
  j["catastrophic_repeats"] = s.catastrophic_repeats;
  j["catastrophic_tol"] = s.catastrophic_tol;
  j["epsilon"] = s.epsilon;
  j["flag_catastrophic"] = s.flag_catastrophic;
  j["resample_policy"] = to_string(s.resample_policy);
  j["samples_per_slice"] = s.samples_per_slice;
  j["search_epsilon"] = s.search_epsilon ? nlohmann::ordered_json(*s.search_epsilon) : nlohmann::ordered_json(nullptr);
  j["strict"] = s.strict;
  j["tau"] = s.tau;
  j["threads"] = s.threads;
  return j;
}

inline SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig s = {}) {
  detail::read(j, "alpha", s.alpha);
  if (j.contains("budget_mode")) s.budget_mode = parse_budget_mode(j.at("budget_mode").get<std::string>());
  detail::read(j, "catastrophic_repeats", s.catastrophic_repeats);
  detail::read(j, "catastrophic_tol", s.catastrophic_tol);
  detail::read(j, "epsilon", s.epsilon);
  detail::read(j, "flag_catastrophic", s.flag_catastrophic);
  if (j.contains("resample_policy"))
    s.resample_policy = parse_resample_policy(j.at("resample_policy").get<std::string>());
  detail::read(j, "samples_per_slice", s.samples_per_slice);
  if (j.contains("search_epsilon") && !j.at("search_epsilon").is_null())
    s.search_epsilon = j.at("search_epsilon").get<double>();
  detail::read(j, "strict", s.strict);
  detail::read(j, "tau", s.tau);
  detail::read(j, "threads", s.threads);
  return s;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["task"] = to_json(c.task);
  j["task_manifest"] = c.task_manifest ? nlohmann::ordered_json(*c.task_manifest) : nlohmann::ordered_json(nullptr);
  j["stages"] = {{"anchor", c.stages.anchor}, {"coverage", c.stages.coverage}, {"reduce", c.stages.reduce}};
  j["split"] = to_string(c.split);
  j["coverage_kind"] = to_string(c.coverage_kind);
  auto regimes = nlohmann::ordered_json::array();
  for (auto r : c.regimes) regimes.push_back(to_string(r));
  j["regimes"] = regimes;
  const auto& r = c.rules;
  j["rules"] = {{"beam_width", r.clauses.beam_width},
                {"high_quality_mcc", r.high_quality_mcc},
                {"max_depth", r.clauses.max_depth},
                {"max_eq_values", r.clauses.max_eq_values},
                {"max_thresholds", r.clauses.max_thresholds},
                {"seed_k", r.seed_k},
                {"split_clusters", r.split_clusters},
                {"splitters", r.splitters},
                {"thresholds", r.thresholds},
                {"train_fraction", r.fractions.train},
                {"validation_fraction", r.fractions.validation}};
  const auto& p = c.coverage.plan;
  const auto& e = c.coverage.embedding;
  j["coverage"] = {{"clusters", p.clusters},
                   {"d_pca", p.d_pca},
                   {"embedding_dim", e.dim},
                   {"embedding_noise", e.noise_sd},
                   {"first_center", p.first_center == FirstCenter::Random ? "random" : "farthest-from-mean"},
                   {"length_tolerance", p.length_tolerance},
                   {"n_sel", p.n_sel},
                   {"radius", p.radius}};
  j["reduce"] = {{"attention_channels", c.reduce.attention_channels},
                 {"budget", c.reduce.budget},
                 {"kind", to_string(c.reduce.kind)},
                 {"leak_rate", c.reduce.leak_rate},
                 {"surrogate_pairs", c.reduce.surrogate.pairs},
                 {"surrogate_steps", c.reduce.surrogate.steps}};
  j["search"] = to_json(c.search);
  return j;
}

// Missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    detail::read(j, "schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion)
      fail(ErrorCode::Parse, "unsupported config schema version " + std::to_string(c.schema_version));
    detail::read(j, "experiment", c.experiment);
    detail::read(j, "seed", c.seed);
    detail::read(j, "seeds", c.seeds);
    detail::read(j, "output_dir", c.output_dir);
    if (j.contains("task")) c.task = plant_spec_from_json(j.at("task"));
    if (j.contains("task_manifest") && !j.at("task_manifest").is_null())
      c.task_manifest = j.at("task_manifest").get<std::string>();
    if (j.contains("stages")) {
      const auto& s = j.at("stages");
      detail::read(s, "anchor", c.stages.anchor);
      detail::read(s, "coverage", c.stages.coverage);
      detail::read(s, "reduce", c.stages.reduce);
    }
    if (j.contains("split")) c.split = parse_split_method(j.at("split").get<std::string>());
    if (j.contains("coverage_kind")) c.coverage_kind = parse_plan_kind(j.at("coverage_kind").get<std::string>());
    if (j.contains("regimes")) {
      c.regimes.clear();
      for (const auto& r : j.at("regimes")) {
        const auto s = r.get<std::string>();
        if (s == "positive") c.regimes.push_back(Regime::Positive);
        else if (s == "negative") c.regimes.push_back(Regime::Negative);
        else fail(ErrorCode::Parse, "unknown regime '" + s + "'");
      }
    }
    if (j.contains("rules")) {
      const auto& r = j.at("rules");
      detail::read(r, "beam_width", c.rules.clauses.beam_width);
      detail::read(r, "high_quality_mcc", c.rules.high_quality_mcc);
      detail::read(r, "max_depth", c.rules.clauses.max_depth);
      detail::read(r, "max_eq_values", c.rules.clauses.max_eq_values);
      detail::read(r, "max_thresholds", c.rules.clauses.max_thresholds);
      detail::read(r, "seed_k", c.rules.seed_k);
      detail::read(r, "split_clusters", c.rules.split_clusters);
      detail::read(r, "splitters", c.rules.splitters);
      detail::read(r, "thresholds", c.rules.thresholds);
      detail::read(r, "train_fraction", c.rules.fractions.train);
      detail::read(r, "validation_fraction", c.rules.fractions.validation);
    }
    if (j.contains("coverage")) {
      const auto& v = j.at("coverage");
      auto& p = c.coverage.plan;
      detail::read(v, "clusters", p.clusters);
      detail::read(v, "d_pca", p.d_pca);
      detail::read(v, "embedding_dim", c.coverage.embedding.dim);
      detail::read(v, "embedding_noise", c.coverage.embedding.noise_sd);
      if (v.contains("first_center")) {
        const auto s = v.at("first_center").get<std::string>();
        if (s == "random") p.first_center = FirstCenter::Random;
        else if (s == "farthest-from-mean") p.first_center = FirstCenter::FarthestFromMean;
        else fail(ErrorCode::Parse, "unknown first_center '" + s + "'");
      }
      detail::read(v, "length_tolerance", p.length_tolerance);
      detail::read(v, "n_sel", p.n_sel);
      detail::read(v, "radius", p.radius);
    }
    if (j.contains("reduce")) {
      const auto& v = j.at("reduce");
      detail::read(v, "attention_channels", c.reduce.attention_channels);
      detail::read(v, "budget", c.reduce.budget);
      if (v.contains("kind")) c.reduce.kind = parse_reducer_kind(v.at("kind").get<std::string>());
      detail::read(v, "leak_rate", c.reduce.leak_rate);
      detail::read(v, "surrogate_pairs", c.reduce.surrogate.pairs);
      detail::read(v, "surrogate_steps", c.reduce.surrogate.steps);
    }
    if (j.contains("search")) c.search = search_config_from_json(j.at("search"));
    c.search.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed run config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  try {
    return run_config_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path + ": " + e.what());
  }
}

}  // namespace ruleloc
