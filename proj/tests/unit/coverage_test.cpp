#include <gtest/gtest.h>

#include <set>

#include "reference.hpp"
#include "ruleloc/coverage.hpp"

using namespace ruleloc;

namespace {

DenseMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix m(n, d);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

std::vector<std::vector<double>> rows_of(const DenseMatrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows; ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

TEST(Pca, FullRankPreservesCenteredInnerProducts) {
  auto x = random_matrix(30, 4, 3);
  auto pca = pca_embed(x, 4);
  ASSERT_EQ(pca.effective_rank, 4u);
  for (std::size_t a = 0; a < x.rows; ++a)
    for (std::size_t b = 0; b < x.rows; ++b) {
      double orig = 0.0, proj = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        orig += (x(a, c) - pca.mean[c]) * (x(b, c) - pca.mean[c]);
        proj += pca.projected(a, c) * pca.projected(b, c);
      }
      EXPECT_NEAR(orig, proj, 1e-9);
    }
}

TEST(Pca, LineWithSmallNoiseIsOneDimensional) {
  Rng rng(5);
  DenseMatrix x(200, 6);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double t = rng.normal(0.0, 3.0);
    for (std::size_t c = 0; c < x.cols; ++c) x(r, c) = t * static_cast<double>(c + 1) + rng.normal(0.0, 0.05);
  }
  auto pca = pca_embed(x, 1);
  EXPECT_GE(pca.explained_variance_ratio[0], 0.99);
}

TEST(Pca, MeanProjectsToOriginAndReconstructionIsExactAtRank) {
  // Rank-2 data in five dimensions.
  Rng rng(11);
  DenseMatrix x(40, 5);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double a = rng.normal(), b = rng.normal();
    for (std::size_t c = 0; c < 5; ++c) x(r, c) = a * (c + 1.0) - b * (c * c - 2.0) + 7.0;
  }
  auto pca = pca_embed(x, 2);
  ASSERT_EQ(pca.effective_rank, 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    double proj_mean = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) proj_mean += pca.projected(r, k);
    EXPECT_NEAR(proj_mean / static_cast<double>(x.rows), 0.0, 1e-9);
  }
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      double rec = pca.mean[c];
      for (std::size_t k = 0; k < 2; ++k) rec += pca.projected(r, k) * pca.components(k, c);
      EXPECT_NEAR(rec, x(r, c), 1e-8);
    }
  auto over = pca_embed(x, 4);
  EXPECT_EQ(over.effective_rank, 2u);
  EXPECT_TRUE(over.warning.has_value());
}

TEST(Pca, RowsAreUnitNormAndBadArgumentsRaise) {
  auto pca = pca_embed(random_matrix(20, 5, 1), 3);
  for (std::size_t r = 0; r < 20; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < 3; ++k) n += pca.embedded(r, k) * pca.embedded(r, k);
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
  EXPECT_THROW(pca_embed(random_matrix(20, 5, 1), 6), Error);
  EXPECT_THROW(pca_embed(random_matrix(1, 5, 1), 1), Error);
}

TEST(KCenter, TwoApproximationAgainstExhaustiveOptimum) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto pts = random_matrix(9, 2, 100 + seed);
    for (std::size_t k = 1; k <= 3; ++k) {
      auto res = greedy_k_center(pts, k);
      const double opt = reference::optimal_k_center_radius(rows_of(pts), k);
      EXPECT_LE(res.radius, 2.0 * opt + 1e-12);
      std::set<std::size_t> distinct(res.centers.begin(), res.centers.end());
      EXPECT_EQ(distinct.size(), k);
    }
  }
}

TEST(KCenter, KEqualsNGivesZeroRadiusAndTiesPickLowestId) {
  auto pts = DenseMatrix::from_rows({{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}});
  auto res = greedy_k_center(pts, 2);
  // The mean is the origin; four points tie as farthest, the lowest id wins.
  EXPECT_EQ(res.centers[0], 1u);
  EXPECT_EQ(res.centers[1], 2u);
  EXPECT_DOUBLE_EQ(greedy_k_center(pts, 5).radius, 0.0);
  EXPECT_THROW(greedy_k_center(pts, 6), Error);
  EXPECT_THROW(greedy_k_center(pts, 0), Error);
}

TEST(Representatives, RareClusterGetsAMedoid) {
  // 40 points near the origin, 2 far away.
  Rng rng(2);
  DenseMatrix pts(42, 2);
  for (std::size_t r = 0; r < 40; ++r) {
    pts(r, 0) = rng.normal(0.0, 0.1);
    pts(r, 1) = rng.normal(0.0, 0.1);
  }
  pts(40, 0) = 10.0;
  pts(41, 0) = 10.2;
  auto kc = greedy_k_center(pts, 2);
  std::vector<std::size_t> ids(42);
  std::iota(ids.begin(), ids.end(), 0);
  auto sel = select_representatives(ids, kc.assignment, pts, 3, 0);
  ASSERT_EQ(sel.size(), 3u);
  EXPECT_TRUE(std::count(sel.begin(), sel.end(), 40u) + std::count(sel.begin(), sel.end(), 41u) >= 1);
  std::set<std::size_t> distinct(sel.begin(), sel.end());
  EXPECT_EQ(distinct.size(), sel.size());
  EXPECT_EQ(select_representatives(ids, kc.assignment, pts, 100, 0).size(), 42u);
}

TEST(MatchControls, InjectiveWithLengthFallback) {
  auto pts = DenseMatrix::from_rows({{0, 0}, {1, 0}, {0.1, 0}, {1.1, 0}, {5, 5}});
  std::vector<double> lengths{10, 10, 10, 30, 10};
  auto m = match_controls({0, 1}, {2, 3, 4}, pts, lengths, 0.2);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].unrelated, 2u);
  EXPECT_FALSE(m.pairs[0].fallback);
  // Example 3 is nearest to 1 but its length is incompatible.
  EXPECT_EQ(m.pairs[1].unrelated, 4u);

  std::vector<double> disjoint{10, 10, 50, 60, 70};
  auto f = match_controls({0, 1}, {2, 3, 4}, pts, disjoint, 0.0);
  EXPECT_TRUE(f.pairs[0].fallback && f.pairs[1].fallback);
  EXPECT_FALSE(f.warnings.empty());

  auto t = match_controls({0, 1}, {2}, pts, lengths, 0.2);
  EXPECT_EQ(t.pairs.size(), 1u);
  EXPECT_TRUE(t.truncated);
}

TEST(Diagnostics, FractionAndQuantilesAreOrdered) {
  auto pts = random_matrix(50, 3, 9);
  std::vector<std::size_t> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  auto d = coverage_diagnostics(pts, ids, {0, 1, 2}, 0.5);
  EXPECT_GE(d.fraction_within, 0.0);
  EXPECT_LE(d.fraction_within, 1.0);
  EXPECT_LE(d.q50, d.q90);
  EXPECT_LE(d.q90, d.q99);
  EXPECT_LE(d.q99, d.max);
  EXPECT_EQ(coverage_diagnostics(pts, ids, ids, 0.0).fraction_within, 1.0);
}

TEST(Plans, SpectralPlanCoversRareClusterAndIsDeterministic) {
  PlantSpec spec;
  spec.layer_widths = {16};
  spec.examples = {{{60, 60}, {60, 60}}};
  spec.clusters = 6;
  spec.rare_cluster_fraction = 0.05;
  const auto task = plant_task(spec);
  LatentEmbeddingParams lp;
  const auto emb = planted_latent_embedding(task, lp);
  std::vector<std::size_t> plus, minus;
  for (auto id : task.slice_examples(Regime::Positive, Slice::Associated)) plus.push_back(id);
  for (auto id : task.slice_examples(Regime::Positive, Slice::Unrelated)) minus.push_back(id);
  auto space = plan_space(emb, plus, minus, 8);
  CoverageConfig cfg;
  cfg.clusters = 8;
  cfg.n_sel = 12;
  auto a = spectral_plan(space, plus, minus, example_lengths(task), cfg);
  auto b = spectral_plan(space, plus, minus, example_lengths(task), cfg);
  EXPECT_EQ(plan_to_json(a).dump(), plan_to_json(b).dump());
  EXPECT_EQ(a.selected_plus.size(), 12u);
  EXPECT_EQ(a.selected_minus.size(), 12u);
  bool rare = false;
  for (auto id : a.selected_plus) rare |= task.examples[id].cluster == spec.clusters - 1;
  bool any_rare = false;
  for (auto id : plus) any_rare |= task.examples[id].cluster == spec.clusters - 1;
  if (any_rare) {
    EXPECT_TRUE(rare);
  }
  auto r = random_plan(space, plus, minus, example_lengths(task), cfg);
  EXPECT_EQ(r.selected_plus.size(), 12u);
}
