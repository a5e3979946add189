#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "ruleloc/candidates.hpp"
#include "ruleloc/localizer.hpp"

using namespace ruleloc;

namespace {

std::vector<std::vector<double>> one(std::vector<double> v) { return {std::move(v)}; }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(IntegratedGradients, ZeroPathGivesZeroScores) {
  TanhSurrogate f({1.0, -2.0, 0.5}, {1.0, 0.3, 2.0});
  for (double s : ig_surrogate_score(f, one({0.4, -1.0, 2.0}), one({0.4, -1.0, 2.0}), 10)) EXPECT_EQ(s, 0.0);
}

TEST(IntegratedGradients, LinearIsExactForAnyStepCount) {
  LinearSurrogate f({2.0, -1.0, 0.5, 3.0});
  const std::vector<double> hp{1.0, 2.0, -1.0, 0.25}, hm{0.0, 0.5, 1.0, -0.75};
  const std::vector<double> w{2.0, -1.0, 0.5, 3.0};
  for (std::uint32_t steps : {1u, 3u, 20u}) {
    const auto s = ig_surrogate_score(f, one(hp), one(hm), steps);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s[i], w[i] * (hp[i] - hm[i]), 1e-12);
    EXPECT_NEAR(sum(s), f.value(hp) - f.value(hm), 1e-12);
  }
}

TEST(IntegratedGradients, QuadraticMatchesClosedFormPathIntegral) {
  const std::vector<double> a{2.0, 0.5, 0.0, -1.0, 0.5, 1.0, 0.3, 0.0, 0.0, 0.3, -0.5, 0.2, -1.0, 0.0, 0.2, 1.5};
  const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
  QuadraticSurrogate f(a, b);
  const std::vector<double> hp{1.0, -0.5, 2.0, 0.7}, hm{-0.3, 0.4, 0.1, -1.2};
  const auto s = ig_surrogate_score(f, one(hp), one(hm), 20);
  // Integral of (A(hm + t d) + b)_i d_i over t in [0, 1].
  for (std::size_t i = 0; i < 4; ++i) {
    double a_hm = 0.0, a_d = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      a_hm += a[i * 4 + j] * hm[j];
      a_d += a[i * 4 + j] * (hp[j] - hm[j]);
    }
    EXPECT_NEAR(s[i], (a_hm + 0.5 * a_d + b[i]) * (hp[i] - hm[i]), 1e-3);
  }
  EXPECT_NEAR(sum(s), f.value(hp) - f.value(hm), 1e-9);
}

TEST(IntegratedGradients, CompletenessGapShrinksWithSteps) {
  TanhSurrogate f({1.0, -2.0, 0.5}, {1.5, 0.7, 2.0});
  const std::vector<double> hp{1.2, -1.0, 0.9}, hm{-0.8, 0.6, -0.4};
  const double exact = f.value(hp) - f.value(hm);
  const double gap20 = std::abs(sum(ig_surrogate_score(f, one(hp), one(hm), 20)) - exact);
  const double gap40 = std::abs(sum(ig_surrogate_score(f, one(hp), one(hm), 40)) - exact);
  EXPECT_LT(gap40, gap20);
}

TEST(IntegratedGradients, DimensionMismatchRaises) {
  LinearSurrogate f({1.0, 2.0});
  EXPECT_THROW(ig_surrogate_score(f, one({1.0}), one({0.0}), 4), Error);
  EXPECT_THROW(ig_surrogate_score(f, one({1.0, 1.0}), one({0.0, 0.0}), 0), Error);
}

TEST(Ranking, SortedByMagnitudeWithCoordinateTies) {
  const std::vector<NeuronCoord> c{{1, 0}, {0, 3}, {0, 1}, {2, 2}};
  const std::vector<double> s{0.5, -0.9, 0.5, 0.1};
  auto r = make_ranking(c, s, "test");
  EXPECT_EQ(r.entries[0].coord, (NeuronCoord{0, 3}));
  EXPECT_EQ(r.entries[1].coord, (NeuronCoord{0, 1}));
  EXPECT_EQ(r.entries[2].coord, (NeuronCoord{1, 0}));
}

TEST(Retention, FilterMonotonicityAndLayerOrder) {
  std::vector<NeuronCoord> c;
  std::vector<double> s;
  Rng rng(3);
  for (std::uint32_t l = 0; l < 2; ++l)
    for (std::uint32_t ch = 0; ch < 16; ++ch) {
      c.push_back({l, ch});
      s.push_back(rng.normal());
    }
  auto r = make_ranking(c, s, "test");
  EXPECT_EQ(retain_top(r, 100).size(), 32u);
  EXPECT_EQ(retain_top(r, 32, mlp_only(8)).size(), 16u);
  for (std::size_t m = 1; m < 32; ++m) {
    auto small = retain_top(r, m), big = retain_top(r, m + 1);
    for (const auto& x : small.ranked) EXPECT_TRUE(big.contains(x));
  }
  auto u = retain_top(r, 20);
  for (const auto& [layer, coords] : u.by_layer) {
    std::vector<NeuronCoord> expected;
    for (const auto& x : u.ranked)
      if (x.layer == layer) expected.push_back(x);
    EXPECT_EQ(coords, expected);
  }
  std::ostringstream csv;
  write_ranking_csv(csv, r, u);
  EXPECT_EQ(csv.str().substr(0, 27), "coord,score,retained,scorer");
}

TEST(Retention, PlantedAgonistsLeadTheSurrogateRanking) {
  PlantSpec spec;
  spec.layer_widths = {512, 512};
  spec.separated_background = true;
  spec.regime(Regime::Positive).agonist_strengths = {0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto task = plant_task(spec);
  SurrogateParams p;
  const auto r = planted_surrogate_ranking(task, Regime::Positive, p);
  const auto u = retain_top(r, 4 * 8);
  for (const auto& n : task.planted_in(Regime::Positive, PlantKind::Agonist)) EXPECT_TRUE(u.contains(n.coord));
}

TEST(Reducer, LeakArithmeticAndPadding) {
  PlantSpec spec;
  spec.layer_widths = {256};
  spec.separated_background = true;
  spec.regime(Regime::Positive).agonist_strengths = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  const auto task = plant_task(spec);
  auto none = ground_truth_reducer(task, Regime::Positive, 64, 0.0, 1);
  EXPECT_EQ(none.retained.size(), 64u);
  EXPECT_TRUE(none.dropped.empty());
  for (const auto& n : task.planted_in(Regime::Positive, PlantKind::Agonist))
    EXPECT_TRUE(std::binary_search(none.retained.begin(), none.retained.end(), n.coord));
  auto leak = ground_truth_reducer(task, Regime::Positive, 64, 0.25, 1);
  EXPECT_EQ(leak.dropped.size(), 2u);
  for (const auto& d : leak.dropped) EXPECT_FALSE(std::binary_search(leak.retained.begin(), leak.retained.end(), d));
  EXPECT_EQ(leak.retained.size(), 64u);
  EXPECT_THROW(ground_truth_reducer(task, Regime::Positive, 64, 1.5, 1), Error);
}

TEST(Reducer, EndToEndRecallDecomposes) {
  // Exact evaluation: search recall is 1, so recall equals the reducer's share.
  double total = 0.0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    PlantSpec spec;
    spec.layer_widths = {512};
    spec.seed = seed + 1;
    spec.examples = {{{64, 64}, {64, 64}}};
    spec.separated_background = true;
    spec.regime(Regime::Positive).agonist_strengths = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};
    auto task = std::make_shared<const SyntheticTask>(plant_task(spec));
    auto red = ground_truth_reducer(*task, Regime::Positive, 128, 0.25, seed);
    SyntheticOracle oracle(task);
    EvalSubset subset{task->slice_examples(Regime::Positive, Slice::Associated),
                      task->slice_examples(Regime::Positive, Slice::Unrelated)};
    auto res = cha_search(red.retained, oracle, subset, Regime::Positive, {});
    std::size_t hit = 0;
    for (const auto& n : task->planted_in(Regime::Positive, PlantKind::Agonist))
      for (const auto& a : res.agonists) hit += a.neuron == n.coord;
    total += hit / 8.0;
  }
  EXPECT_NEAR(total / seeds, 0.75, 1e-12);
}
