#include <gtest/gtest.h>

#include "ruleloc/rules.hpp"

using namespace ruleloc;

namespace {

PredicateColumn bool_col(std::string name, std::vector<double> v, Observability o = Observability::Prompt) {
  return {std::move(name), ColumnKind::Bool, Provenance::Seed, o, std::move(v)};
}

PredicateColumn real_col(std::string name, std::vector<double> v) {
  return {std::move(name), ColumnKind::Real, Provenance::Seed, Observability::Prompt, std::move(v)};
}

std::vector<Split> all_train(std::size_t n) { return std::vector<Split>(n, Split::Train); }

bool has_perfect(const std::vector<PoolEntry>& pool, std::size_t depth) {
  for (const auto& e : pool)
    if (e.clause.depth() == depth && std::abs(e.train_mcc - 1.0) < 1e-12) return true;
  return false;
}

struct RegimeView {
  std::shared_ptr<const SyntheticTask> task;
  PredicateMatrix matrix;  // rows of D_b only
  std::vector<Slice> slices;
};

RegimeView regime_view(const PlantSpec& spec, Regime regime, std::uint64_t split_seed = 3) {
  RegimeView v;
  v.task = std::make_shared<const SyntheticTask>(plant_task(spec));
  const auto& t = *v.task;
  const auto splits = assign_splits(t.features, t.examples.size(), 8, split_seed);
  const auto full = PredicateMatrix::make(t.features, splits);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < t.examples.size(); ++i)
    if (t.examples[i].baseline == regime) {
      keep.push_back(i);
      v.slices.push_back(t.examples[i].slice);
    }
  v.matrix = full.restrict_to(keep);
  return v;
}

}  // namespace

TEST(PredicateMatrix, RejectsDuplicateNamesAndBadLengths) {
  EXPECT_THROW(PredicateMatrix::make({bool_col("a", {0, 1}), bool_col("a", {1, 0})}, all_train(2)), Error);
  EXPECT_THROW(PredicateMatrix::make({bool_col("a", {0, 1, 1})}, all_train(2)), Error);
  auto m = PredicateMatrix::make({bool_col("a", {0, 1})}, all_train(2));
  EXPECT_THROW(m.column_index("b"), Error);
}

TEST(SplitLabels, TestRowsSealedUntilRelease) {
  SplitLabels l({1, 0, 1}, {Split::Train, Split::Validation, Split::Test});
  EXPECT_EQ(l.at(0), 1);
  try {
    l.at(2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TestSplitAccess);
  }
  l.release_test();
  EXPECT_EQ(l.at(2), 1);
}

TEST(EnumerateClauses, RecoversBooleanThresholdAndConjunction) {
  const std::vector<double> flag{0, 1, 1, 0, 1, 0, 0, 1};
  const std::vector<std::uint8_t> y_flag{0, 1, 1, 0, 1, 0, 0, 1};
  auto m = PredicateMatrix::make({bool_col("f", flag)}, all_train(8));
  EXPECT_TRUE(has_perfect(enumerate_clauses(m, SplitLabels(y_flag, all_train(8))), 1));

  const std::vector<double> x{1, 7, 3, 5, 9, 2, 6, 4};
  std::vector<std::uint8_t> y_x;
  for (double v : x) y_x.push_back(v >= 5 ? 1 : 0);
  auto mx = PredicateMatrix::make({real_col("x", x)}, all_train(8));
  EXPECT_TRUE(has_perfect(enumerate_clauses(mx, SplitLabels(y_x, all_train(8))), 1));

  // Labels equal c1 AND c2 over all four combinations, twice.
  const std::vector<double> c1{0, 0, 1, 1, 0, 0, 1, 1}, c2{0, 1, 0, 1, 0, 1, 0, 1};
  const std::vector<std::uint8_t> y{0, 0, 0, 1, 0, 0, 0, 1};
  auto mc = PredicateMatrix::make({bool_col("c1", c1), bool_col("c2", c2)}, all_train(8));
  ClauseConfig cfg;
  cfg.beam_width = 2;
  auto pool = enumerate_clauses(mc, SplitLabels(y, all_train(8)), cfg);
  EXPECT_FALSE(has_perfect(std::vector<PoolEntry>(pool.begin(), pool.begin() + 4), 1));
  EXPECT_TRUE(has_perfect(pool, 2));
  // Signatures are unique.
  std::set<std::vector<std::uint8_t>> sigs;
  for (const auto& e : pool) EXPECT_TRUE(sigs.insert(e.fired).second);
}

TEST(EnumerateClauses, SingleClassIsAnExtractionError) {
  auto m = PredicateMatrix::make({bool_col("f", {0, 1, 0})}, all_train(3));
  try {
    enumerate_clauses(m, SplitLabels({1, 1, 1}, all_train(3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Extraction);
  }
}

TEST(EnumerateClauses, ThresholdsAreCapped) {
  std::vector<double> x(200);
  std::vector<std::uint8_t> y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(i);
    y[i] = i % 3 == 0;
  }
  auto m = PredicateMatrix::make({real_col("x", x)}, all_train(200));
  ClauseConfig cfg;
  cfg.max_depth = 1;
  auto pool = enumerate_clauses(m, SplitLabels(y, all_train(200)), cfg);
  EXPECT_LE(pool.size(), 2 * cfg.max_thresholds);
}

TEST(GreedyCompose, PerfectClauseAndDisjunction) {
  const std::vector<double> c1{1, 0, 0, 0, 1, 0, 0, 0}, c2{0, 1, 0, 0, 0, 1, 0, 0};
  const std::vector<std::uint8_t> y{1, 1, 0, 0, 1, 1, 0, 0};
  auto m = PredicateMatrix::make({bool_col("c1", c1), bool_col("c2", c2)}, all_train(8));
  SplitLabels labels(y, all_train(8));
  ClauseConfig cfg;
  cfg.max_depth = 1;
  auto res = greedy_or_compose(enumerate_clauses(m, labels, cfg), m, labels, 8);
  ASSERT_EQ(res.rule.clauses.size(), 2u);
  EXPECT_DOUBLE_EQ(res.rule.score(Split::Train)->mcc, 1.0);
  EXPECT_EQ(to_text(res.rule), "IF (c1) OR (c2) THEN fire");

  SplitLabels exact(std::vector<std::uint8_t>{1, 0, 0, 0, 1, 0, 0, 0}, all_train(8));
  auto single = greedy_or_compose(enumerate_clauses(m, exact, cfg), m, exact, 8);
  ASSERT_EQ(single.rule.clauses.size(), 1u);
  EXPECT_DOUBLE_EQ(single.trace.back(), 1.0);
}

TEST(GreedyCompose, StrictStepsAndNearExhaustiveOptimum) {
  int close = 0;
  const int instances = 200;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(1000 + inst);
    const std::size_t n = 60;
    std::vector<Split> splits(n);
    for (std::size_t i = 0; i < n; ++i) splits[i] = i % 2 ? Split::Validation : Split::Train;
    std::vector<PredicateColumn> cols;
    std::vector<std::uint8_t> y(n);
    for (int c = 0; c < 5; ++c) {
      std::vector<double> v(n);
      for (auto& e : v) e = rng.bernoulli(0.3) ? 1.0 : 0.0;
      cols.push_back(bool_col("c" + std::to_string(c), v));
    }
    for (std::size_t i = 0; i < n; ++i)
      y[i] = (cols[0].values[i] > 0 || cols[1].values[i] > 0) != rng.bernoulli(0.15);
    auto m = PredicateMatrix::make(cols, splits);
    SplitLabels labels(y, splits);
    ClauseConfig cfg;
    cfg.max_depth = 1;
    auto pool = enumerate_clauses(m, labels, cfg);
    if (pool.size() > 10) pool.resize(10);
    auto res = greedy_or_compose(pool, m, labels, 10);
    for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_GT(res.trace[i], res.trace[i - 1]);
    const auto val = m.rows_in(Split::Validation);
    double best_single = -1.0;
    for (const auto& e : pool) best_single = std::max(best_single, mcc_on(e.fired, labels, val));
    EXPECT_GE(res.trace.back(), best_single - 1e-12);
    double best = -1.0;
    for (std::uint32_t mask = 1; mask < (1u << pool.size()); ++mask) {
      std::vector<std::uint8_t> f(n, 0);
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (mask >> i & 1)
          for (std::size_t r = 0; r < n; ++r) f[r] |= pool[i].fired[r];
      best = std::max(best, mcc_on(f, labels, val));
    }
    close += res.trace.back() >= best - 0.05;
  }
  EXPECT_GE(close, instances * 9 / 10);
}

TEST(InduceSplit, ConstantTrueAndEmptyRegime) {
  auto m = PredicateMatrix::make({bool_col("f", {1, 1, 1, 1})}, all_train(4));
  RuleSet always;
  always.clauses = {RuleClause{{Literal{"f", Comparator::Eq, 1.0, true}}}};
  const std::vector<std::uint8_t> base{1, 0, 1, 1};
  auto s = induce_split(always, m, base, Regime::Positive);
  EXPECT_EQ(s.plus.size(), 3u);
  EXPECT_TRUE(s.minus.empty());
  try {
    induce_split(always, m, std::vector<std::uint8_t>{1, 1, 1, 1}, Regime::Negative);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RegimeEmpty);
  }
}

TEST(InduceSplit, SliceFlagRecoversPlantedSlices) {
  PlantSpec spec;
  spec.layer_widths = {8};
  const auto task = plant_task(spec);
  const auto m = PredicateMatrix::make(task.features, all_train(task.examples.size()));
  const auto rule = parse_rule("IF (slice_flag) THEN fire");
  for (Regime r : {Regime::Negative, Regime::Positive}) {
    auto s = induce_split(rule, m, task.baseline_labels(), r);
    EXPECT_EQ(s.plus, task.slice_examples(r, Slice::Associated));
    EXPECT_EQ(s.minus, task.slice_examples(r, Slice::Unrelated));
  }
}

TEST(FlipTargets, MatchFlipSetMembership) {
  PlantSpec spec;
  spec.layer_widths = {64};
  spec.regime(Regime::Positive).agonist_strengths = {0.5};
  auto view = regime_view(spec, Regime::Positive);
  SyntheticOracle oracle(view.task);
  const auto neuron = view.task->planted_in(Regime::Positive, PlantKind::Agonist).front().coord;
  const auto targets = flip_targets(neuron, oracle, view.matrix.example_ids, view.slices, Regime::Positive);
  const auto& f = view.task->flip_set(neuron, Regime::Positive);
  for (std::size_t r = 0; r < targets.size(); ++r) EXPECT_EQ(targets[r], f.test(view.matrix.example_ids[r]) ? 1 : 0);
  EXPECT_EQ(oracle.query_count(), 1u);
  // A coordinate outside every flip set.
  for (const auto& c : view.task->layer_coords(0))
    if (view.task->flip_set(c, Regime::Positive).none()) {
      auto z = flip_targets(c, oracle, view.matrix.example_ids, view.slices, Regime::Positive);
      EXPECT_EQ(std::count(z.begin(), z.end(), 1), 0);
      break;
    }
}

TEST(Anchor, AlignedPredicateGivesPerfectTestMccAndExactGate) {
  PlantSpec spec;
  spec.layer_widths = {64};
  spec.aligned_predicates = true;
  spec.separated_background = true;
  spec.regime(Regime::Negative).agonist_strengths = {0.5, 0.7};
  auto view = regime_view(spec, Regime::Negative);
  SyntheticOracle oracle(view.task);
  std::vector<std::uint8_t> base(view.matrix.rows(), 0);
  for (const auto& p : view.task->planted_in(Regime::Negative, PlantKind::Agonist)) {
    auto y = flip_targets(p.coord, oracle, view.matrix.example_ids, view.slices, Regime::Negative);
    auto res = anchor_rule(p.coord, Regime::Negative, SplitLabels(y, view.matrix.splits), view.matrix);
    ASSERT_TRUE(res.rule.has_value());
    EXPECT_DOUBLE_EQ(*res.test_mcc, 1.0);
    EXPECT_TRUE(res.high_quality);
    EXPECT_EQ(res.rule->role, RuleRole::AnchoredBackward);
    auto repaired = gate_repairs(*res.rule, p.coord, view.matrix, oracle, base, view.slices, Regime::Negative);
    std::vector<ExampleId> expected;
    const auto& f = view.task->flip_set(p.coord, Regime::Negative);
    for (auto id : view.matrix.example_ids)
      if (f.test(id)) expected.push_back(id);
    EXPECT_EQ(repaired, expected);
  }
}

TEST(Anchor, DegenerateTargetsGiveNoAnchor) {
  auto m = PredicateMatrix::make({bool_col("f", {0, 1, 0, 1})}, all_train(4));
  auto res = anchor_rule({0, 0}, Regime::Positive, SplitLabels({0, 0, 0, 0}, all_train(4)), m);
  EXPECT_FALSE(res.rule.has_value());
  EXPECT_FALSE(res.high_quality);
}

TEST(Anchor, IndependentFlipSetsDoNotAnchor) {
  std::vector<double> mccs;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    PlantSpec spec;
    spec.layer_widths = {64};
    spec.seed = seed;
    spec.examples = {{{100, 100}, {100, 100}}};
    spec.regime(Regime::Positive).agonist_strengths = {0.5};
    spec.regime(Regime::Positive).unrelated_ratio = 1.0;
    auto view = regime_view(spec, Regime::Positive, seed);
    // Drop the slice columns: the flip set is then independent of every column.
    std::vector<PredicateColumn> cols;
    for (const auto& c : view.matrix.columns)
      if (c.name.rfind("noise_", 0) == 0) cols.push_back(c);
    auto m = PredicateMatrix::make(cols, view.matrix.splits, view.matrix.example_ids);
    SyntheticOracle oracle(view.task);
    const auto neuron = view.task->planted_in(Regime::Positive, PlantKind::Agonist).front().coord;
    auto y = flip_targets(neuron, oracle, m.example_ids, view.slices, Regime::Positive);
    auto res = anchor_rule(neuron, Regime::Positive, SplitLabels(y, m.splits), m);
    ASSERT_TRUE(res.test_mcc.has_value());
    EXPECT_FALSE(res.high_quality);
    mccs.push_back(*res.test_mcc);
  }
  EXPECT_LT(median(mccs), 0.3);
}

TEST(Gate, PolicyAndEligibility) {
  auto m = PredicateMatrix::make(
      {bool_col("p", {1, 0}), bool_col("conf", {1, 1}, Observability::OutputDerived)}, all_train(2));
  auto rule = parse_rule("IF (p) THEN fire");
  auto on = gate_policy(rule, {1, 2}, m, 0);
  EXPECT_TRUE(on.intervene);
  ASSERT_EQ(on.ablate.size(), 1u);
  EXPECT_EQ(on.ablate[0], (NeuronCoord{1, 2}));
  auto off = gate_policy(rule, {1, 2}, m, 1);
  EXPECT_FALSE(off.intervene);
  EXPECT_TRUE(off.ablate.empty());
  try {
    gate_policy(parse_rule("IF (p AND conf) THEN fire"), {1, 2}, m, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GateIneligible);
    EXPECT_NE(std::string(e.what()).find("conf"), std::string::npos);
  }
}

TEST(FakeRule, PermutationPreservesCountsAndIsSeeded) {
  std::vector<std::uint8_t> y(40, 0);
  for (std::size_t i = 0; i < 15; ++i) y[i] = 1;
  auto a = fake_rule_control(y, 7), b = fake_rule_control(y, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), 1), 15);
  EXPECT_NE(a, y);
  EXPECT_NE(fake_rule_control(y, 8), a);
}

TEST(FakeRule, PermutedSplitterHasLowValidationMcc) {
  std::vector<double> mccs;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PlantSpec spec;
    spec.layer_widths = {8};
    spec.seed = seed;
    const auto task = plant_task(spec);
    const auto splits = assign_splits(task.features, task.examples.size(), 8, seed);
    const auto m = PredicateMatrix::make(task.features, splits);
    ClauseConfig cfg;
    cfg.prompt_only = true;
    SplitLabels fake(fake_rule_control(task.baseline_labels(), seed), splits);
    auto s = extract_splitters(m, fake, 1, cfg, 8, RuleRole::FakeControl);
    mccs.push_back(selection_mcc(s.splitters.front()));
  }
  EXPECT_LT(median(mccs), 0.2);
}

TEST(Splitters, RankedByHeldOutMcc) {
  PlantSpec spec;
  spec.layer_widths = {8};
  const auto task = plant_task(spec);
  const auto splits = assign_splits(task.features, task.examples.size(), 8, 1);
  const auto m = PredicateMatrix::make(task.features, splits);
  ClauseConfig cfg;
  cfg.prompt_only = true;
  auto s = extract_splitters(m, SplitLabels(task.baseline_labels(), splits), 3, cfg, 8);
  ASSERT_EQ(s.splitters.size(), 3u);
  for (std::size_t i = 1; i < s.splitters.size(); ++i)
    EXPECT_GE(selection_mcc(s.splitters[i - 1]), selection_mcc(s.splitters[i]));
  for (const auto& r : s.splitters) {
    EXPECT_TRUE(r.gate_eligible);
    EXPECT_FALSE(r.score(Split::Test).has_value());
  }
}

TEST(Splits, ProportionsAndDeterminism) {
  PlantSpec spec;
  spec.layer_widths = {8};
  const auto task = plant_task(spec);
  const auto a = assign_splits(task.features, task.examples.size(), 8, 4);
  EXPECT_EQ(a, assign_splits(task.features, task.examples.size(), 8, 4));
  const double n = static_cast<double>(a.size());
  EXPECT_NEAR(std::count(a.begin(), a.end(), Split::Train) / n, 0.6, 0.03);
  EXPECT_NEAR(std::count(a.begin(), a.end(), Split::Validation) / n, 0.2, 0.03);
}

TEST(RuleLanguage, TextRoundTrip) {
  const std::string text = "IF (x >= 3.5 AND flag) OR (NOT f) OR (y <= -0.125 AND z = 2) THEN fire";
  auto r = parse_rule(text);
  ASSERT_EQ(r.clauses.size(), 3u);
  EXPECT_EQ(to_text(r), text);
  EXPECT_EQ(parse_rule("IF (col2 = true) THEN fire").clauses, parse_rule("IF (col2) THEN fire").clauses);
  EXPECT_EQ(parse_rule("IF (col2 = false) THEN fire").clauses, parse_rule("IF (NOT col2) THEN fire").clauses);
  EXPECT_EQ(to_text(parse_rule("IF false THEN fire")), "IF false THEN fire");
  RuleSet odd;
  odd.clauses = {RuleClause{{Literal{"x", Comparator::Ge, 0.1 + 0.2, false}}}};
  EXPECT_EQ(parse_rule(to_text(odd)).clauses, odd.clauses);
  for (const char* bad : {"IF (x >= ) THEN fire", "IF (x THEN fire", "x >= 1", "IF (x) THEN fire extra", "IF () THEN fire"})
    EXPECT_THROW(parse_rule(bad), Error) << bad;
}

TEST(RuleLanguage, JsonRoundTripIsExact) {
  const std::vector<double> x{0.3, 1.7, 2.2, 0.9, 3.1, 0.05};
  auto m = PredicateMatrix::make({real_col("x", x), bool_col("f", {1, 0, 1, 0, 1, 1})},
                                 {Split::Train, Split::Train, Split::Validation, Split::Validation, Split::Test,
                                  Split::Train});
  SplitLabels y({0, 1, 1, 0, 1, 0}, m.splits);
  auto res = greedy_or_compose(enumerate_clauses(m, y), m, y, 4);
  y.release_test();
  score_rule(res.rule, m, y);
  const auto j = rule_to_json(res.rule);
  const auto back = rule_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back, res.rule);
  EXPECT_EQ(rule_to_json(back).dump(), j.dump());
  EXPECT_EQ(parse_rule(j["text"].get<std::string>()).clauses, res.rule.clauses);
  auto broken = nlohmann::json::parse(j.dump());
  broken["text"] = "IF (zzz) THEN fire";
  EXPECT_THROW(rule_from_json(broken), Error);
}

TEST(RuleEvaluation, PureAcrossBatchesAndOrder) {
  Rng rng(6);
  std::vector<double> x(50), f(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.normal();
    f[i] = rng.bernoulli(0.5);
  }
  auto m = PredicateMatrix::make({real_col("x", x), bool_col("f", f)}, all_train(50));
  auto rule = parse_rule("IF (x >= 0.2 AND f) OR (x <= -1) THEN fire");
  const auto all = rule_fires(rule, m);
  std::vector<std::size_t> rev(50);
  std::iota(rev.rbegin(), rev.rend(), 0);
  const auto flipped = m.restrict_to(rev);
  const auto f2 = rule_fires(rule, flipped);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(all[i], rule_fires_row(rule, m, i));
    EXPECT_EQ(f2[i], all[rev[i]]);
  }
}
