#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cuter/assessor.hpp"
#include "cuter/stream.hpp"

using namespace cuter;

namespace {

KernelSpec gaussian(double sigma) {
  KernelSpec k;
  k.sigma = sigma;
  return k;
}

std::vector<FeatureMap> held_out_maps(double noise, std::size_t count) {
  StreamConfig cfg;
  cfg.noise_sigma = noise;
  cfg.seed = 3;
  std::vector<FeatureMap> out;
  for (auto& s : Stream(cfg).held_out(count, 0)) out.push_back(s.raw);
  return out;
}

AssessmentReport report(std::string id, double mean) {
  AssessmentReport r;
  r.source_id = std::move(id);
  r.mean_fiedler = mean;
  r.per_sample = {mean};
  r.sample_count = 1;
  return r;
}

}  // namespace

TEST(AverageFiedler, DisconnectedClustersGiveZero) {
  FeatureMap fm(4, 4, 2);
  for (std::size_t i = 0; i < fm.patches(); ++i) fm.patch(i)[0] = i < 8 ? 0.0 : 10.0;
  const auto r = average_fiedler({fm}, gaussian(0.1));
  EXPECT_LE(r.mean_fiedler, 1e-8);
  EXPECT_EQ(r.sample_count, 1u);
}

TEST(AverageFiedler, DuplicatedMapRepeatsSameValue) {
  const auto maps = held_out_maps(0.1, 1);
  const auto single = average_fiedler(maps, KernelSpec{});
  const auto r = average_fiedler(std::vector<FeatureMap>(5, maps[0]), KernelSpec{});
  ASSERT_EQ(r.per_sample.size(), 5u);
  for (double v : r.per_sample) EXPECT_EQ(v, single.mean_fiedler);
  EXPECT_NEAR(r.mean_fiedler, single.mean_fiedler, 1e-12);
}

TEST(AverageFiedler, MeanMatchesPerSampleAndCount) {
  const auto r = average_fiedler(held_out_maps(0.2, 12), KernelSpec{}, LaplacianKind::unnormalized, "src");
  EXPECT_EQ(r.sample_count, r.per_sample.size());
  EXPECT_GE(r.sample_count, 1u);
  EXPECT_NEAR(r.mean_fiedler,
              std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) / r.per_sample.size(), 1e-12);
  EXPECT_EQ(r.source_id, "src");
}

TEST(AverageFiedler, LowNoiseMapsScoreBelowHighNoiseMaps) {
  const auto low = average_fiedler(held_out_maps(0.05, 16), KernelSpec{});
  const auto high = average_fiedler(held_out_maps(0.8, 16), KernelSpec{});
  EXPECT_LT(low.mean_fiedler, high.mean_fiedler);
}

TEST(AverageFiedler, SkipsDegenerateMapsAndKeepsTheRest) {
  KernelSpec k;
  k.kind = KernelKind::cosine_continuous;
  auto maps = held_out_maps(0.1, 3);
  maps.insert(maps.begin() + 1, FeatureMap(8, 8, 16, 0.0));
  const auto r = average_fiedler(maps, k);
  EXPECT_EQ(r.sample_count, 3u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].index, 1u);
}

TEST(AverageFiedler, Errors) {
  EXPECT_THROW(average_fiedler({}, KernelSpec{}), Error);
  KernelSpec k;
  k.kind = KernelKind::cosine_continuous;
  try {
    average_fiedler({FeatureMap(4, 4, 2, 0.0)}, k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_feature);
  }
}

TEST(RankSources, AscendingByMean) {
  const auto ranked = rank_sources({report("a", 0.5), report("b", 0.1), report("c", 0.3)});
  EXPECT_EQ(ranked[0].mean_fiedler, 0.1);
  EXPECT_EQ(ranked[1].mean_fiedler, 0.3);
  EXPECT_EQ(ranked[2].mean_fiedler, 0.5);
}

TEST(RankSources, SingleReportAndTies) {
  EXPECT_EQ(rank_sources({report("x", 0.2)})[0].source_id, "x");
  const auto ranked = rank_sources({report("z", 0.2), report("a", 0.2)});
  EXPECT_EQ(ranked[0].source_id, "a");
  EXPECT_THROW(rank_sources({}), Error);
}

TEST(RankSources, NoiseFamiliesRankInNoiseOrder) {
  std::vector<AssessmentReport> reports;
  for (auto [id, noise] : {std::pair{"mid", 0.2}, {"high", 0.8}, {"low", 0.05}})
    reports.push_back(average_fiedler(held_out_maps(noise, 16), KernelSpec{}, LaplacianKind::unnormalized, id));
  const auto ranked = rank_sources(reports);
  EXPECT_EQ(ranked[0].source_id, "low");
  EXPECT_EQ(ranked[1].source_id, "mid");
  EXPECT_EQ(ranked[2].source_id, "high");
}

TEST(Lemma1, TwoHundredRandomGraphsHoldTheBound) {
  const auto r = verify_lemma1(200, 10, 0);
  EXPECT_EQ(r.expansion.trials, 200u);
  EXPECT_EQ(r.expansion.violations, 0u);
  EXPECT_GE(r.expansion.max_slack, -kBoundTolerance);
}

TEST(Lemma1, TwoNodeGraph) {
  // lambda_2 = 2w, h = w, Delta = w: w <= w <= 2w.
  for (double w : {0.01, 0.5, 3.0}) {
    SymMatrix a(2);
    a.set(0, 1, w);
    EXPECT_TRUE(lemma1_margins(PatchGraph(a)).holds());
  }
}

TEST(Lemma1, DisconnectedGraphIsTight) {
  SymMatrix a(4);
  a.set(0, 1, 1.0);
  a.set(2, 3, 1.0);
  const auto m = lemma1_margins(PatchGraph(a));
  EXPECT_NEAR(m.lower, 0.0, 1e-12);
  EXPECT_NEAR(m.upper, 0.0, 1e-6);
  EXPECT_TRUE(m.holds());
}

TEST(Lemma1, RejectsOversizedGraphs) { EXPECT_THROW(verify_lemma1(1, 15, 0), Error); }

TEST(Lemma1, ViolationsNeverExceedTrials) {
  const auto r = verify_lemma1(30, 8, 9);
  EXPECT_LE(r.expansion.violations, r.expansion.trials);
  EXPECT_LE(r.conductance.violations, r.conductance.trials);
}

TEST(Theorem1, ZeroNoiseIsDisconnected) {
  Rng rng = make_rng(0, 0);
  const SymMatrix a = random_block_adjacency(12, 2, rng);
  EXPECT_NEAR(theorem1_margin(a, SymMatrix(12)), 0.0, 1e-9);
  const auto r = verify_theorem1(10, 3, 12, 0.0, 0);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Theorem1, TwoHundredTrialsHoldTheBound) {
  const auto two = verify_theorem1(100, 2, 12, 0.05, 0);
  const auto three = verify_theorem1(100, 3, 12, 0.05, 1);
  EXPECT_EQ(two.violations + three.violations, 0u);
  EXPECT_GE(std::min(two.max_slack, three.max_slack), -kBoundTolerance);
}

TEST(Theorem1, RankOneNoiseRecordsSlack) {
  Rng rng = make_rng(4, 0);
  const std::size_t n = 10;
  const SymMatrix a = random_block_adjacency(n, 2, rng);
  std::vector<double> u(n);
  for (double& x : u) x = uniform01(rng);
  SymMatrix eps(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) eps.set(i, j, 0.01 * u[i] * u[j]);
  const double m = theorem1_margin(a, eps);
  EXPECT_GE(m, 0.0);
  EXPECT_LT(m, 1.0);
}

TEST(Theorem1, LargeNoiseTriggersResampling) {
  const auto r = verify_theorem1(20, 2, 8, 0.8, 2);
  EXPECT_GT(r.resamples, 0u);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Theorem1, Preconditions) {
  EXPECT_THROW(verify_theorem1(1, 1, 12, 0.05, 0), Error);
  EXPECT_THROW(verify_theorem1(1, 2, 12, -1.0, 0), Error);
}
