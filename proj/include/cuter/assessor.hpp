#pragma once

// Annotation-free localization assessment by average Fiedler value, ranking
// of feature sources, and randomized checks of the Cheeger and block-noise
// spectral bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/linalg.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/rng.hpp"

namespace cuter {

inline constexpr std::size_t kDefaultAssessmentSamples = 64;

struct SkippedSample {
  std::size_t index = 0;
  std::string reason;
};

struct AssessmentReport {
  std::string source_id;
  double mean_fiedler = 0.0;
  std::vector<double> per_sample;
  KernelSpec kernel;
  LaplacianKind laplacian = LaplacianKind::unnormalized;
  std::size_t sample_count = 0;
  std::vector<SkippedSample> skipped;
};

// Fiedler value of each map's graph and their mean. Maps whose graph cannot
// be built (zero-norm patches under a cosine kernel, isolated nodes under the
// normalized Laplacian) are skipped and listed; at least one must survive.
inline AssessmentReport average_fiedler(const std::vector<FeatureMap>& fms, const KernelSpec& k,
                                        LaplacianKind which = LaplacianKind::unnormalized,
                                        std::string source_id = {}) {
  if (fms.empty()) throw Error(ErrorKind::invalid_input, "assessment needs at least one feature map");
  AssessmentReport r;
  r.source_id = std::move(source_id);
  r.kernel = k;
  r.laplacian = which;
  for (std::size_t i = 0; i < fms.size(); ++i) {
    try {
      r.per_sample.push_back(fiedler_value(build_adjacency(fms[i], k), which));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_feature && e.kind() != ErrorKind::isolated_node) throw;
      r.skipped.push_back({i, e.what()});
    }
  }
  if (r.per_sample.empty()) throw Error(ErrorKind::degenerate_feature, "every feature map was degenerate");
  r.sample_count = r.per_sample.size();
  r.mean_fiedler = std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) /
                   static_cast<double>(r.sample_count);
  return r;
}

// Ascending mean Fiedler value (best localizer first), ties by source_id.
inline std::vector<AssessmentReport> rank_sources(std::vector<AssessmentReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::invalid_input, "nothing to rank");
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    if (a.mean_fiedler != b.mean_fiedler) return a.mean_fiedler < b.mean_fiedler;
    return a.source_id < b.source_id;
  });
  return reports;
}

struct BoundTrialReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double max_slack = std::numeric_limits<double>::infinity();  // tightest margin seen
  std::size_t resamples = 0;
};

inline constexpr double kBoundTolerance = 1e-9;

struct CheegerMargins {
  double lower = 0.0;  // h - lambda_2 / 2
  double upper = 0.0;  // sqrt(2 Delta lambda_2) - h
  bool holds() const noexcept { return lower >= -kBoundTolerance && upper >= -kBoundTolerance; }
  double tightest() const noexcept { return std::min(lower, upper); }
};

// lambda_2(L)/2 <= h <= sqrt(2 Delta lambda_2(L)) with h the edge-expansion
// (cardinality) Cheeger constant.
inline CheegerMargins lemma1_margins(const PatchGraph& g) {
  const double l2 = fiedler_value(g, LaplacianKind::unnormalized);
  const double h = cheeger_constant_bruteforce(g, CheegerNormalization::cardinality);
  const double scale = 1.0 + h + l2;
  return {(h - l2 / 2.0) / scale, (std::sqrt(2.0 * max_degree(g) * l2) - h) / scale};
}

// lambda_2(L_sym)/2 <= phi <= sqrt(2 lambda_2(L_sym)) with phi the
// volume-normalized Cheeger constant (conductance).
inline CheegerMargins conductance_margins(const PatchGraph& g) {
  const double l2 = fiedler_value(g, LaplacianKind::normalized);
  const double phi = cheeger_constant_bruteforce(g, CheegerNormalization::volume);
  const double scale = 1.0 + phi + l2;
  return {(phi - l2 / 2.0) / scale, (std::sqrt(2.0 * l2) - phi) / scale};
}

// Complete graph with i.i.d. uniform(0,1) weights.
inline PatchGraph random_uniform_graph(std::size_t n, Rng& rng) {
  SymMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a.set(i, j, uniform01(rng));
  return PatchGraph(std::move(a));
}

struct Lemma1Report {
  BoundTrialReport expansion;    // the stated inequality, unnormalized Laplacian
  BoundTrialReport conductance;  // the normalized-Laplacian pairing
};

// Trial t draws n uniformly from [2, n_max] and a random uniform graph from
// the engine split_seed(seed, t).
inline Lemma1Report verify_lemma1(std::size_t trials, std::size_t n_max, std::uint64_t seed) {
  if (n_max < 2 || n_max > kMaxBruteForceNodes)
    throw Error(ErrorKind::size_limit, "n_max must lie in [2, 14], got " + std::to_string(n_max));
  Lemma1Report r;
  r.expansion.trials = r.conductance.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, t);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, n_max)(rng);
    const PatchGraph g = random_uniform_graph(n, rng);
    const auto e = lemma1_margins(g);
    r.expansion.violations += !e.holds();
    r.expansion.max_slack = std::min(r.expansion.max_slack, e.tightest());
    const auto c = conductance_margins(g);
    r.conductance.violations += !c.holds();
    r.conductance.max_slack = std::min(r.conductance.max_slack, c.tightest());
  }
  return r;
}

// (||eps||_2 + ||eps||_inf) - lambda_2(L(A* + eps)), relative to 1 + bound.
inline double theorem1_margin(const SymMatrix& a_star, const SymMatrix& eps) {
  const SymMatrix a = a_star + eps;
  const double l2 = fiedler_value(PatchGraph(a), LaplacianKind::unnormalized);
  const double bound = spectral_norm(eps) + inf_norm(eps);
  return (bound - l2) / (1.0 + bound);
}

// Block-diagonal adjacency over `blocks` contiguous near-equal groups with
// within-block weights uniform in [0.5, 1).
inline SymMatrix random_block_adjacency(std::size_t n, std::size_t blocks, Rng& rng) {
  SymMatrix a(n);
  auto block_of = [&](std::size_t i) { return i * blocks / n; };
  std::uniform_real_distribution<double> w(0.5, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (block_of(i) == block_of(j)) a.set(i, j, w(rng));
  return a;
}

// Trial t: A* from random_block_adjacency and a symmetric zero-diagonal noise
// eps with within-block entries uniform(-s, s) and cross-block entries
// uniform(0, s). Noise making any weight negative is redrawn (counted in
// resamples).
inline BoundTrialReport verify_theorem1(std::size_t trials, std::size_t blocks, std::size_t n, double noise_scale,
                                        std::uint64_t seed) {
  if (blocks < 2 || blocks > n) throw Error(ErrorKind::invalid_input, "need 2 <= blocks <= n");
  if (!(noise_scale >= 0.0)) throw Error(ErrorKind::invalid_input, "noise_scale must be >= 0");
  BoundTrialReport r;
  r.trials = trials;
  auto block_of = [&](std::size_t i) { return i * blocks / n; };
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, t);
    const SymMatrix a_star = random_block_adjacency(n, blocks, rng);
    SymMatrix eps(n);
    for (;;) {
      bool feasible = true;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const double u = uniform01(rng);
          const double e = block_of(i) == block_of(j) ? noise_scale * (2.0 * u - 1.0) : noise_scale * u;
          eps.set(i, j, e);
          feasible = feasible && a_star(i, j) + e >= 0.0;
        }
      if (feasible) break;
      ++r.resamples;
    }
    const double m = theorem1_margin(a_star, eps);
    r.violations += m < -kBoundTolerance;
    r.max_slack = std::min(r.max_slack, m);
  }
  return r;
}

}  // namespace cuter
