#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ruleloc/harness/experiments.hpp"

namespace ruleloc {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ruleloc_harness_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.experiment = "e0";
  cfg.seed = 11;
  cfg.task.layer_widths = {64, 64};
  cfg.task.aligned_predicates = true;
  cfg.task.regime(Regime::Positive).agonist_strengths = {0.5, 0.35};
  cfg.task.regime(Regime::Negative).agonist_strengths = {0.6};
  cfg.reduce.budget = 32;
  cfg.seeds = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Config, RoundTripKeepsEveryField) {
  auto cfg = small_config();
  cfg.split = SplitMethod::FakeRule;
  cfg.coverage_kind = PlanKind::Random;
  cfg.reduce.kind = ReducerKind::Surrogate;
  cfg.search.search_epsilon = 0.1;
  cfg.rules.thresholds = {0.7, 0.9};
  const auto back = run_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
}

TEST(Config, PartialConfigKeepsDefaultsAndRejectsSchema) {
  const auto cfg = run_config_from_json(nlohmann::json::parse(R"({"experiment": "e2", "seed": 5})"));
  EXPECT_EQ(cfg.experiment, "e2");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.seeds, RunConfig{}.seeds);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"schema_version": 99})")), Error);
}

TEST(Harness, E0FindsPlantedAgonistsAndAnchorsThem) {
  const auto dir = scratch("e0");
  ArtifactStore store(dir);
  const auto rep = run_e0(small_config(), store);
  const auto& regimes = rep.payload["regimes"];
  ASSERT_EQ(regimes.size(), 2u);
  std::size_t agonists = 0, hq = 0;
  for (const auto& r : regimes) {
    agonists += r["agonists"].get<std::size_t>();
    hq += r["high_quality_counts"]["0.85"].get<std::size_t>();
    EXPECT_TRUE(fs::exists(dir / r["sources"]["agonists"].get<std::string>()));
  }
  EXPECT_GE(agonists, 3u);
  EXPECT_GE(hq, 1u);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "metadata.json"));
}

TEST(Harness, RerunsAreByteIdentical) {
  for (const std::string exp : {"e0", "e2"}) {
    auto cfg = small_config();
    cfg.experiment = exp;
    const auto a = scratch(exp + "_a"), b = scratch(exp + "_b");
    ArtifactStore sa(a), sb(b);
    const auto ra = run_experiment(cfg, sa);
    run_experiment(cfg, sb);
    for (const auto& rel : ra.artifacts) EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
  }
}

TEST(Harness, EmptyRetentionReportsNoAgonists) {
  auto cfg = small_config();
  cfg.reduce.kind = ReducerKind::Surrogate;
  cfg.reduce.attention_channels = 64;  // every channel counts as attention
  ArtifactStore store(scratch("empty"));
  const auto rep = run_e0(cfg, store);
  for (const auto& r : rep.payload["regimes"]) {
    EXPECT_EQ(r["candidates"].get<std::size_t>(), 0u);
    EXPECT_EQ(r["agonists"].get<std::size_t>(), 0u);
  }
}

TEST(Harness, StageFailureNamesTheStage) {
  auto cfg = small_config();
  cfg.search.tau = 1.5;
  ArtifactStore store(scratch("fail"));
  try {
    run_e0(cfg, store);
    FAIL() << "expected a stage error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Stage);
    EXPECT_NE(std::string(e.what()).find("search"), std::string::npos);
  }
}

TEST(Harness, UnknownExperimentIsRejected) {
  auto cfg = small_config();
  cfg.experiment = "e9";
  ArtifactStore store(scratch("unknown"));
  EXPECT_THROW(run_experiment(cfg, store), Error);
}

}  // namespace
}  // namespace ruleloc
