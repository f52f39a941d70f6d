#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cuter/metrics.hpp"
#include "cuter/rng.hpp"
#include "cuter/spectral_cut.hpp"
#include "cuter/verify.hpp"

using namespace cuter;

namespace {

PatchGraph graph_from(std::size_t n, std::initializer_list<std::tuple<int, int, double>> edges) {
  SymMatrix a(n);
  for (auto [i, j, w] : edges) a.set(i, j, w);
  return PatchGraph(std::move(a));
}

// Two cliques of the given sizes joined by `cross` weights.
PatchGraph two_blocks(std::size_t a, std::size_t b, double within, double cross) {
  const std::size_t n = a + b;
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, (i < a) == (j < a) ? within : cross);
  return PatchGraph(std::move(m));
}

Bipartition split_of(std::vector<std::uint8_t> side) {
  Bipartition p;
  p.side_of = std::move(side);
  return p;
}

// Background prototype e0 and one prototype per object (e1, e2, ...) plus
// gaussian noise.
FeatureMap planted_map(std::size_t h, std::size_t w, const std::vector<Box>& objects, double noise, Rng& rng) {
  const std::size_t dim = 6;
  FeatureMap fm(h, w, dim);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t proto = 0;
      for (std::size_t o = 0; o < objects.size(); ++o)
        if (objects[o].contains(static_cast<int>(r), static_cast<int>(c))) proto = o + 1;
      auto p = fm.patch(fm.index(r, c));
      for (std::size_t d = 0; d < dim; ++d) p[d] = (d == proto ? 1.0 : 0.0) + noise * n01(rng);
    }
  return fm;
}

}  // namespace

TEST(NcutEnergy, TwoNodeGraphIsTwo) {
  for (double w : {0.1, 1.0, 7.5}) EXPECT_NEAR(ncut_energy(graph_from(2, {{0, 1, w}}), split_of({0, 1})), 2.0, 1e-12);
}

TEST(NcutEnergy, ComponentSplitIsZero) {
  EXPECT_DOUBLE_EQ(ncut_energy(two_blocks(3, 3, 1.0, 0.0), split_of({0, 0, 0, 1, 1, 1})), 0.0);
}

TEST(NcutEnergy, MatchesDoubleLoopSummation) {
  Rng rng = make_rng(1, 0);
  SymMatrix a(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) a.set(i, j, uniform01(rng));
  const PatchGraph g(a);
  const std::vector<std::uint8_t> side{1, 0, 0, 1, 1, 0};
  double cut = 0, va = 0, vb = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      (side[i] ? vb : va) += a(i, j);
      if (side[i] == 1 && side[j] == 0) cut += a(i, j);
    }
  EXPECT_NEAR(ncut_energy(g, split_of(side)), cut / va + cut / vb, 1e-12);
}

TEST(NcutEnergy, ZeroVolumeSideIsDegenerate) {
  try {
    ncut_energy(graph_from(3, {{0, 1, 1.0}}), split_of({0, 0, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_partition);
  }
  EXPECT_THROW(ncut_energy(graph_from(2, {{0, 1, 1.0}}), split_of({1, 1})), Error);
}

TEST(NcutBipartition, RecoversPlantedFivePlusFive) {
  const auto g = two_blocks(5, 5, 1.0, 0.01);
  const auto p = ncut_bipartition(g);
  EXPECT_TRUE(same_partition(p, split_of({0, 0, 0, 0, 0, 1, 1, 1, 1, 1})));
  EXPECT_TRUE(same_partition(p, brute_force_ncut(g)));
  EXPECT_NEAR(p.energy, brute_force_ncut(g).energy, 1e-12);
}

TEST(NcutBipartition, TwoNodeGraphUniqueSplit) {
  const auto p = ncut_bipartition(graph_from(2, {{0, 1, 0.5}}));
  EXPECT_EQ(p.count(0), 1u);
  EXPECT_EQ(p.count(1), 1u);
  EXPECT_NEAR(p.energy, 2.0, 1e-12);
}

TEST(NcutBipartition, DisconnectedIsAmbiguous) {
  try {
    ncut_bipartition(two_blocks(3, 3, 1.0, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ambiguous_cut);
  }
}

TEST(NcutBipartition, BothSidesNonEmptyAndEnergyNonNegative) {
  Rng rng = make_rng(2, 0);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_connected_graph(2 + t % 11, rng);
    const auto p = ncut_bipartition(g);
    EXPECT_GT(p.count(0), 0u);
    EXPECT_GT(p.count(1), 0u);
    EXPECT_GE(p.energy, 0.0);
  }
}

TEST(NcutBipartition, RelaxationNeverBeatsOracleAndIsUsuallyClose) {
  const auto r = verify_ncut_oracle(100, 30, 12, 3);
  EXPECT_EQ(r.below_oracle, 0u);
  EXPECT_GE(10 * r.within_ratio, 9 * r.trials);
  EXPECT_EQ(r.planted_misses, 0u);
}

TEST(BruteForceNcut, DisconnectedCliquesGiveComponentSplit) {
  const auto p = brute_force_ncut(two_blocks(3, 4, 1.0, 0.0));
  EXPECT_DOUBLE_EQ(p.energy, 0.0);
  EXPECT_TRUE(same_partition(p, split_of({0, 0, 0, 1, 1, 1, 1})));
}

TEST(BruteForceNcut, K4HandEnumeration) {
  // 1-3 split: cut 3, volumes 3 and 9 -> 1 + 1/3. 2-2 split: cut 4, volumes 6 and 6 -> 4/3.
  SymMatrix a(4);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) a.set(i, j, 1.0);
  const auto p = brute_force_ncut(PatchGraph(a));
  EXPECT_NEAR(p.energy, 4.0 / 3.0, 1e-12);
  // Tie between all seven splits; the lexicographically smallest side_of wins.
  EXPECT_EQ(p.side_of, (std::vector<std::uint8_t>{0, 0, 0, 1}));
}

TEST(BruteForceNcut, SizeLimit) {
  SymMatrix a(15, 0.0);
  for (std::size_t i = 0; i + 1 < 15; ++i) a.set(i, i + 1, 1.0);
  try {
    brute_force_ncut(PatchGraph(a));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size_limit);
  }
}

TEST(MaskToBbox, Examples) {
  GridMask m(5, 6);
  m.cells[2 * 6 + 3] = 1;
  EXPECT_EQ(mask_to_bbox(m), (Box{2, 3, 2, 3}));
  GridMask full(4, 5);
  std::fill(full.cells.begin(), full.cells.end(), 1);
  EXPECT_EQ(mask_to_bbox(full), (Box{0, 0, 3, 4}));
  try {
    mask_to_bbox(GridMask(3, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_mask);
  }
}

TEST(MaskToBbox, RandomMaskHullMatchesMinMax) {
  Rng rng = make_rng(4, 0);
  for (int t = 0; t < 50; ++t) {
    GridMask m(7, 9);
    for (auto& c : m.cells) c = uniform01(rng) < 0.1;
    if (m.count() == 0) m.cells[10] = 1;
    int h1 = 99, w1 = 99, h2 = -1, w2 = -1;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 9; ++c)
        if (m.at(r, c)) h1 = std::min(h1, r), h2 = std::max(h2, r), w1 = std::min(w1, c), w2 = std::max(w2, c);
    EXPECT_EQ(mask_to_bbox(m), (Box{h1, w1, h2, w2}));
  }
}

TEST(MaskCut, SinglePlantedObjectFirstRound) {
  Rng rng = make_rng(5, 0);
  const Box obj{2, 3, 5, 6};
  const auto fm = planted_map(8, 8, {obj}, 0.05, rng);
  const auto r = maskcut(fm, KernelSpec{}, 1);
  ASSERT_EQ(r.iterations.size(), 1u);
  EXPECT_GE(iou(r.iterations[0].bbox, obj), 0.8);
}

TEST(MaskCut, TwoPlantedObjectsTwoRounds) {
  Rng rng = make_rng(6, 0);
  const std::vector<Box> objs{{0, 0, 2, 2}, {4, 4, 7, 6}};
  const auto fm = planted_map(8, 8, objs, 0.05, rng);
  const auto r = maskcut(fm, KernelSpec{}, 2);
  ASSERT_EQ(r.iterations.size(), 2u);
  for (std::size_t i = 0; i < r.grid_h * r.grid_w; ++i)
    EXPECT_FALSE(r.iterations[0].mask.cells[i] && r.iterations[1].mask.cells[i]);
  const auto matched = greedy_match_iou({r.iterations[0].bbox, r.iterations[1].bbox}, objs);
  for (double v : matched) EXPECT_GE(v, 0.8);
}

TEST(MaskCut, UniformMapIsWellFormed) {
  FeatureMap fm(4, 4, 3, 1.0);
  const auto r = maskcut(fm, KernelSpec{}, 1);
  ASSERT_LE(r.iterations.size(), 1u);
  for (const auto& it : r.iterations) {
    EXPECT_GE(it.bbox.h1, 0);
    EXPECT_LE(it.bbox.h2, 3);
    EXPECT_EQ(it.bbox, mask_to_bbox(it.mask));
  }
}

TEST(MaskCut, MasksDisjointAndBoxesTight) {
  Rng rng = make_rng(7, 0);
  for (int t = 0; t < 30; ++t) {
    FeatureMap fm(6, 6, 4);
    std::normal_distribution<double> n01;
    for (double& x : fm.values) x = n01(rng);
    for (auto kind : {KernelKind::gaussian, KernelKind::cosine_binarized}) {
      KernelSpec k;
      k.kind = kind;
      const auto r = maskcut(fm, k, 3);
      std::vector<int> owner(36, -1);
      for (std::size_t i = 0; i < r.iterations.size(); ++i) {
        EXPECT_EQ(r.iterations[i].bbox, mask_to_bbox(r.iterations[i].mask));
        for (std::size_t c = 0; c < 36; ++c)
          if (r.iterations[i].mask.cells[c]) {
            EXPECT_EQ(owner[c], -1);
            owner[c] = static_cast<int>(i);
          }
      }
    }
  }
}

TEST(MaskCut, FeatureDimensionPermutationInvariant) {
  Rng rng = make_rng(8, 0);
  const auto fm = planted_map(6, 6, {{1, 1, 3, 3}}, 0.2, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  FeatureMap pm = fm;
  for (std::size_t i = 0; i < fm.patches(); ++i)
    for (std::size_t d = 0; d < fm.dim; ++d) pm.patch(i)[d] = fm.patch(i)[perm[d]];
  for (auto kind : {KernelKind::gaussian, KernelKind::cosine_continuous, KernelKind::cosine_binarized}) {
    KernelSpec k;
    k.kind = kind;
    const auto a = maskcut(fm, k, 3), b = maskcut(pm, k, 3);
    ASSERT_EQ(a.iterations.size(), b.iterations.size());
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
      EXPECT_EQ(a.iterations[i].mask, b.iterations[i].mask);
      EXPECT_NEAR(a.iterations[i].energy, b.iterations[i].energy, 1e-9);
    }
  }
}

// Graph-level form of the planted-object property: cross-similarity <= 0.1,
// within-similarity >= 0.9, foreground side = the planted set.
TEST(NcutBipartition, PlantedObjectIsForeground) {
  Rng rng = make_rng(9, 0);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 12, k = 3 + t % 3;  // object nodes are the first k
    SymMatrix a(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        a.set(i, j, (i < k) == (j < k) ? 0.9 + 0.1 * uniform01(rng) : 0.1 * uniform01(rng));
    const auto p = ncut_bipartition(PatchGraph(a));
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(p.side_of[i] == p.foreground, i < k) << "t=" << t << " i=" << i;
  }
}

TEST(MaskCut, RejectsZeroIterations) { EXPECT_THROW(maskcut(FeatureMap(4, 4, 2, 1.0), KernelSpec{}, 0), Error); }
