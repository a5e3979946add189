#include <gtest/gtest.h>

#include "ruleloc/manifest.hpp"
#include "ruleloc/oracle.hpp"

using namespace ruleloc;

namespace {

// Hand-built task: one layer, regime 1 only, explicit flip sets.
SyntheticTask manual_task(std::uint32_t n_plus, std::uint32_t n_minus, std::uint32_t width) {
  SyntheticTask t;
  t.layer_widths = {width};
  for (std::uint32_t i = 0; i < n_plus; ++i) t.examples.push_back({Regime::Positive, Slice::Associated, 0, 10});
  for (std::uint32_t i = 0; i < n_minus; ++i) t.examples.push_back({Regime::Positive, Slice::Unrelated, 0, 10});
  for (auto& f : t.flips) f.assign(width, Bitset(t.examples.size()));
  return t;
}

void set_range(SyntheticTask& t, std::uint32_t neuron, std::uint32_t first, std::uint32_t count) {
  for (std::uint32_t x = first; x < first + count; ++x) t.flips[1][neuron].set(x);
}

std::size_t flips_of(const std::vector<std::uint8_t>& out, Regime r) { return flip_count(out, r); }

}  // namespace

TEST(Plant, BackgroundOnlyStaysBelowTau) {
  PlantSpec spec;
  spec.background_density = 1.0;
  auto task = plant_task(spec);
  for (Regime r : {Regime::Positive, Regime::Negative}) {
    EXPECT_TRUE(ground_truth_agonists(task, spec.tau, r).empty());
    // Union bound on a few groups.
    for (std::uint32_t start = 0; start < 200; start += 37) {
      std::vector<NeuronCoord> group;
      double sum_plus = 0.0;
      for (std::uint32_t c = start; c < start + 5; ++c) {
        group.push_back({0, c});
        const NeuronCoord one[1] = {{0, c}};
        sum_plus += exact_effect(task, one, r).delta_plus;
      }
      EXPECT_LE(exact_effect(task, group, r).delta_plus, sum_plus + 1e-12);
    }
  }
}

TEST(Plant, AntagonistFlipsEverything) {
  PlantSpec spec;
  spec.regime(Regime::Positive).antagonists = 1;
  auto task = plant_task(spec);
  const auto ant = task.planted_in(Regime::Positive, PlantKind::Antagonist);
  ASSERT_EQ(ant.size(), 1u);
  const NeuronCoord g[1] = {ant[0].coord};
  const auto e = exact_effect(task, g, Regime::Positive);
  EXPECT_DOUBLE_EQ(e.strength(), 1.0);
  EXPECT_DOUBLE_EQ(e.selectivity(), 0.0);
}

TEST(Plant, StrengthsMatchTargetsWithOverlap) {
  PlantSpec spec;
  spec.examples = {{{64, 64}, {64, 64}}};
  spec.regime(Regime::Positive).agonist_strengths = {0.5, 0.5, 0.3, 0.25};
  spec.regime(Regime::Positive).overlap = 0.5;
  auto task = plant_task(spec);
  const auto planted = task.planted_in(Regime::Positive, PlantKind::Agonist);
  ASSERT_EQ(planted.size(), 4u);
  for (const auto& p : planted) {
    const NeuronCoord g[1] = {p.coord};
    EXPECT_NEAR(exact_effect(task, g, Regime::Positive).strength(), p.target_strength, 1.0 / 64.0);
  }
  // The second agonist shares half of the first one's associated flips.
  const auto plus = task.slice_examples(Regime::Positive, Slice::Associated);
  const auto& f0 = task.flip_set(planted[0].coord, Regime::Positive);
  const auto& f1 = task.flip_set(planted[1].coord, Regime::Positive);
  std::size_t shared = 0;
  for (ExampleId x : plus) shared += f0.test(x) && f1.test(x);
  EXPECT_EQ(shared, 16u);
}

TEST(Plant, GroundTruthIsExactlyThePlantedSet) {
  PlantSpec spec;
  spec.layer_widths = {512};
  spec.regime(Regime::Positive).agonist_strengths = {0.5, 0.6, 0.7, 0.8, 0.3, 0.4, 0.45, 0.9};
  auto task = plant_task(spec);
  const auto truth = ground_truth_agonists(task, 0.2, Regime::Positive);
  std::set<NeuronCoord> planted;
  for (const auto& p : task.planted) planted.insert(p.coord);
  std::set<NeuronCoord> found;
  for (const auto& [c, s] : truth) found.insert(c);
  EXPECT_EQ(found, planted);
  EXPECT_TRUE(ground_truth_agonists(task, 0.95, Regime::Positive).empty());
}

TEST(Plant, InfeasibleSpecsNameTheConstraint) {
  auto expect_infeasible = [](const PlantSpec& spec, const std::string& needle) {
    try {
      plant_task(spec);
      FAIL() << "expected infeasible";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Infeasible);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  PlantSpec weak;
  weak.regime(Regime::Positive).agonist_strengths = {0.21};
  expect_infeasible(weak, "below tau + margin");
  PlantSpec cap;
  cap.regime(Regime::Positive).background_cap = 0.2;
  expect_infeasible(cap, "background cap");
  PlantSpec coarse;
  coarse.examples = {{{5, 5}, {5, 5}}};
  coarse.regime(Regime::Positive).agonist_strengths = {0.5};
  expect_infeasible(coarse, "rounding residual");
  PlantSpec crowded;
  crowded.layer_widths = {2};
  crowded.regime(Regime::Positive).agonist_strengths = {0.5, 0.5, 0.5};
  expect_infeasible(crowded, "too many planted");
  PlantSpec overlap;
  overlap.examples = {{{10, 10}, {10, 10}}};
  overlap.regime(Regime::Positive).agonist_strengths = {0.9, 0.9};
  overlap.regime(Regime::Positive).overlap = 0.1;
  expect_infeasible(overlap, "insufficient complement");
}

TEST(Plant, ReproducibleBitForBit) {
  PlantSpec spec;
  spec.regime(Regime::Negative).agonist_strengths = {0.4, 0.6};
  spec.aligned_predicates = true;
  EXPECT_TRUE(plant_task(spec) == plant_task(spec));
  spec.seed = 2;
  auto other = plant_task(spec);
  spec.seed = 1;
  EXPECT_FALSE(plant_task(spec) == other);
}

TEST(Query, EmptyGroupSingletonAndUnion) {
  auto t = manual_task(64, 64, 3);
  set_range(t, 0, 0, 10);
  set_range(t, 1, 20, 6);
  auto task = std::make_shared<const SyntheticTask>(t.with_noise(0.3, 0.3));
  SyntheticOracle oracle(task);
  const auto plus = task->slice_examples(Regime::Positive, Slice::Associated);
  auto base = oracle.query({}, Slice::Associated, Regime::Positive, plus);
  EXPECT_EQ(flips_of(base, Regime::Positive), 0u);  // noise never touches the empty group

  SyntheticOracle exact(std::make_shared<const SyntheticTask>(t));
  const NeuronCoord one[1] = {{0, 0}};
  auto single = exact.query(one, Slice::Associated, Regime::Positive, plus);
  for (std::size_t i = 0; i < plus.size(); ++i) EXPECT_EQ(single[i], i < 10 ? 0 : 1);
  const NeuronCoord two[2] = {{0, 0}, {0, 1}};
  EXPECT_EQ(flips_of(exact.query(two, Slice::Associated, Regime::Positive, plus), Regime::Positive), 16u);
  EXPECT_EQ(exact.query_count(), 2u);
}

TEST(Query, LookupErrors) {
  auto t = manual_task(4, 4, 2);
  SyntheticOracle oracle(std::make_shared<const SyntheticTask>(t));
  const std::vector<ExampleId> ok{0, 1};
  const NeuronCoord bad[1] = {{0, 7}};
  try {
    oracle.query(bad, Slice::Associated, Regime::Positive, ok);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Lookup);
  }
  const std::vector<ExampleId> missing{99};
  EXPECT_THROW(oracle.query({}, Slice::Associated, Regime::Positive, missing), Error);
  // Examples outside the queried regime are rejected as well.
  EXPECT_THROW(oracle.query({}, Slice::Associated, Regime::Negative, ok), Error);
  EXPECT_EQ(oracle.query_count(), 0u);
}

TEST(Query, DeterministicAcrossOrderingsWithNoise) {
  PlantSpec spec;
  spec.regime(Regime::Positive).agonist_strengths = {0.5, 0.4};
  spec.noise_plus = 0.1;
  spec.noise_minus = 0.05;
  auto task = std::make_shared<const SyntheticTask>(plant_task(spec));
  SyntheticOracle a(task), b(task);
  const auto plus = task->slice_examples(Regime::Positive, Slice::Associated);
  const NeuronCoord g1[3] = {{0, 3}, {0, 9}, {0, 100}};
  const NeuronCoord g2[3] = {{0, 100}, {0, 3}, {0, 9}};
  EXPECT_EQ(a.query(g1, Slice::Associated, Regime::Positive, plus),
            b.query(g2, Slice::Associated, Regime::Positive, plus));
  EXPECT_EQ(a.query(g1, Slice::Associated, Regime::Positive, plus, 7),
            a.query(g1, Slice::Associated, Regime::Positive, plus, 7));
  EXPECT_EQ(a.query_count(), 3u);
}

TEST(Oracle, MonotoneAndSubmodularExhaustive) {
  PlantSpec spec;
  spec.layer_widths = {8};
  spec.examples = {{{24, 24}, {24, 24}}};
  spec.background_density = 1.0;
  spec.regime(Regime::Positive).agonist_strengths = {0.5, 0.375};
  spec.regime(Regime::Positive).overlap = 0.5;
  spec.regime(Regime::Negative).agonist_strengths = {0.25};
  auto task = plant_task(spec);
  std::size_t violations = 0;
  for (Regime r : {Regime::Positive, Regime::Negative})
    for (Slice s : {Slice::Associated, Slice::Unrelated}) {
      const auto ids = task.slice_examples(r, s);
      std::vector<double> rate(256);
      for (unsigned mask = 0; mask < 256; ++mask) {
        std::vector<NeuronCoord> g;
        for (std::uint32_t j = 0; j < 8; ++j)
          if (mask >> j & 1) g.push_back({0, j});
        rate[mask] = exact_effect(task, g, r, ids, ids).delta_plus;
      }
      for (unsigned a = 0; a < 256; ++a)
        for (unsigned b = 0; b < 256; ++b) {
          if ((a & b) != a) continue;
          if (rate[a] > rate[b]) ++violations;
          for (unsigned j = 0; j < 8; ++j) {
            if (b >> j & 1) continue;
            const double gain_a = rate[a | 1u << j] - rate[a];
            const double gain_b = rate[b | 1u << j] - rate[b];
            if (gain_a < gain_b - 1e-12) ++violations;
          }
        }
    }
  EXPECT_EQ(violations, 0u);
}

TEST(Oracle, DominanceOfPlantedNeuron) {
  auto t = manual_task(50, 50, 2);
  set_range(t, 0, 0, 45);  // strength 0.9
  set_range(t, 1, 41, 5);  // adds one example outside neuron 0
  const NeuronCoord a[1] = {{0, 0}};
  const NeuronCoord b[1] = {{0, 1}};
  const NeuronCoord ab[2] = {{0, 0}, {0, 1}};
  const double group = exact_effect(t, ab, Regime::Positive).strength();
  EXPECT_NEAR(group, 0.92, 1e-12);
  std::map<std::vector<NeuronCoord>, double> members{{{a[0]}, exact_effect(t, a, Regime::Positive).strength()},
                                                     {{b[0]}, exact_effect(t, b, Regime::Positive).strength()}};
  EXPECT_NEAR(dominance_ratio(group, members, 1), 0.978, 5e-4);
}

TEST(Manifest, RoundTripsBitExactly) {
  PlantSpec spec;
  spec.layer_widths = {64, 32};
  spec.regime(Regime::Positive).agonist_strengths = {0.5, 0.3};
  spec.regime(Regime::Positive).antagonists = 1;
  spec.regime(Regime::Negative).agonist_strengths = {0.7};
  spec.aligned_predicates = true;
  spec.noise_plus = 0.01;
  spec.rare_cluster_fraction = 0.05;
  spec.baseline_mode = BaselineMode::MeanPositional;
  auto task = plant_task(spec);
  const auto text = task_to_json(task).dump();
  auto back = task_from_json(nlohmann::json::parse(text));
  EXPECT_TRUE(back == task);
  EXPECT_EQ(task_to_json(back).dump(), text);
  EXPECT_THROW(task_from_json(nlohmann::json::parse(R"({"format":"other","version":1})")), Error);
}
