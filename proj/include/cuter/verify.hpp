#pragma once

// Randomized verification suites shared by the CLI and the acceptance
// runner: finite-difference gradient checks of the training loss, the
// spectral NCut relaxation against exhaustive search, MaskCut localization
// on planted maps and buffer balance under a long-tailed insertion stream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cuter/linalg.hpp"
#include "cuter/metrics.hpp"
#include "cuter/model.hpp"
#include "cuter/replay.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/rng.hpp"
#include "cuter/spectral_cut.hpp"
#include "cuter/stream.hpp"

namespace cuter {

struct GradCheckOptions {
  std::size_t dim_in = 6;
  std::size_t dim_feat = 5;
  std::size_t grid = 4;
  std::size_t classes = 3;
  std::size_t batch = 2;
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;  // below this gradient magnitude the error is absolute
};

struct GradCheckReport {
  RegularizerKind kind = RegularizerKind::none;
  std::size_t configs = 0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;  // coordinates outside tolerance
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;  // over coordinates judged absolutely
};

namespace detail {

inline std::vector<std::vector<double>*> blocks_of(ModelParams& p) {
  std::vector<std::vector<double>*> out;
  p.for_each_block([&](std::vector<double>& b) { out.push_back(&b); });
  return out;
}

}  // namespace detail

// Config c draws parameters, a random batch with mixed observation masks,
// ASL exponents in [0, 4], alpha in [0.05, 1] and a fixed Gaussian bandwidth
// in [1, 2] from make_rng(seed, c). The bandwidth is fixed because the
// analytic gradient treats it as a constant.
inline GradCheckReport gradcheck(RegularizerKind kind, std::size_t configs, std::uint64_t seed,
                                 const GradCheckOptions& o = {}) {
  GradCheckReport r;
  r.kind = kind;
  r.configs = configs;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < configs; ++c) {
    Rng rng = make_rng(seed, c);
    ModelParams p = init_params(o.dim_in, o.dim_feat, o.classes, o.classes, rng, 0.5);
    std::vector<TrainExample> batch;
    for (std::size_t b = 0; b < o.batch; ++b) {
      TrainExample ex;
      ex.raw = PatchGrid(o.grid, o.grid, o.dim_in);
      for (double& x : ex.raw.values) x = normal(rng);
      for (std::size_t k = 0; k < o.classes; ++k) {
        ex.targets.push_back(uniform01(rng) < 0.5 ? 1.0 : 0.0);
        ex.observed.push_back(k == 0 || uniform01(rng) < 0.7 ? 1 : 0);
      }
      batch.push_back(std::move(ex));
    }
    const AsymLossParams lp{4.0 * uniform01(rng), 4.0 * uniform01(rng)};
    KernelSpec k;
    k.sigma = 1.0 + uniform01(rng);
    const RegularizerSpec spec{kind, 0.05 + 0.95 * uniform01(rng)};

    const auto analytic = loss_and_gradients(p, batch, lp, k, spec).grads;
    ModelParams a = analytic;
    const auto grad_blocks = detail::blocks_of(a);
    ModelParams q = p;
    const auto q_blocks = detail::blocks_of(q);
    for (std::size_t bi = 0; bi < q_blocks.size(); ++bi)
      for (std::size_t i = 0; i < q_blocks[bi]->size(); ++i) {
        double& x = (*q_blocks[bi])[i];
        const double x0 = x;
        x = x0 + o.step;
        const double up = loss_and_gradients(q, batch, lp, k, spec).loss;
        x = x0 - o.step;
        const double down = loss_and_gradients(q, batch, lp, k, spec).loss;
        x = x0;
        const double fd = (up - down) / (2.0 * o.step);
        const double an = (*grad_blocks[bi])[i];
        ++r.coordinates;
        if (std::abs(an) > o.abs_floor) {
          const double rel = std::abs(fd - an) / std::abs(an);
          r.max_rel_error = std::max(r.max_rel_error, rel);
          r.failures += rel > o.rel_tol;
        } else {
          const double abs_err = std::abs(fd - an);
          r.max_abs_error = std::max(r.max_abs_error, abs_err);
          r.failures += abs_err > o.abs_floor;
        }
      }
  }
  return r;
}

struct NcutOracleReport {
  std::size_t trials = 0;
  std::size_t below_oracle = 0;  // relaxed energy below the exhaustive minimum
  std::size_t within_ratio = 0;  // relaxed <= ratio * oracle
  double ratio = 1.2;
  double worst_ratio = 1.0;
  std::size_t planted_trials = 0;
  std::size_t planted_misses = 0;  // planted split not recovered exactly
};

inline constexpr double kOracleTolerance = 1e-9;

// Random graph with edge probability in [0.3, 1] and uniform(0, 1] weights,
// redrawn until connected.
inline PatchGraph random_connected_graph(std::size_t n, Rng& rng) {
  const double density = 0.3 + 0.7 * uniform01(rng);
  for (;;) {
    SymMatrix a(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (uniform01(rng) < density) a.set(i, j, 1.0 - uniform01(rng));
    PatchGraph g(std::move(a));
    if (is_connected(g)) return g;
  }
}

// Two blocks (sizes >= 2, order shuffled) with within-block weights in
// [0.5, 1) and cross-block weights in (0, 0.01 * 0.5]. Returns the planted
// side of each node through `truth`.
inline PatchGraph planted_two_block_graph(std::size_t n, Rng& rng, Bipartition& truth) {
  const std::size_t first = std::uniform_int_distribution<std::size_t>(2, n - 2)(rng);
  std::vector<std::uint8_t> side(n);
  for (std::size_t i = 0; i < n; ++i) side[i] = i < first ? 0 : 1;
  std::shuffle(side.begin(), side.end(), rng);
  SymMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      a.set(i, j, side[i] == side[j] ? 0.5 + 0.5 * uniform01(rng) : 0.005 * (1.0 - uniform01(rng)));
  truth.side_of = side;
  return PatchGraph(std::move(a));
}

// Trial t (random) and planted trial t use make_rng(seed, t) and
// make_rng(seed, 1'000'000 + t); n is uniform in [4, n_max].
inline NcutOracleReport verify_ncut_oracle(std::size_t trials, std::size_t planted, std::size_t n_max,
                                           std::uint64_t seed, double ratio = 1.2) {
  if (n_max < 4 || n_max > kMaxBruteForceNodes)
    throw Error(ErrorKind::size_limit, "n_max must lie in [4, 14], got " + std::to_string(n_max));
  NcutOracleReport r;
  r.trials = trials;
  r.ratio = ratio;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, t);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, n_max)(rng);
    const PatchGraph g = random_connected_graph(n, rng);
    const double relaxed = ncut_bipartition(g).energy;
    const double oracle = brute_force_ncut(g).energy;
    r.below_oracle += relaxed < oracle - kOracleTolerance * std::max(1.0, oracle);
    const double q = oracle > 0.0 ? relaxed / oracle : 1.0;
    r.worst_ratio = std::max(r.worst_ratio, q);
    r.within_ratio += relaxed <= ratio * oracle + kOracleTolerance;
  }
  r.planted_trials = planted;
  for (std::size_t t = 0; t < planted; ++t) {
    Rng rng = make_rng(seed, 1'000'000 + t);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, n_max)(rng);
    Bipartition truth;
    const PatchGraph g = planted_two_block_graph(n, rng, truth);
    r.planted_misses += !same_partition(ncut_bipartition(g), truth);
  }
  return r;
}

// Pairs ground-truth and predicted boxes greedily by descending IoU; each box
// is used at most once. Returns the matched IoU per ground-truth box (0 when
// it stays unmatched).
inline std::vector<double> greedy_match_iou(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  struct Pair {
    double iou;
    std::size_t g, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t p = 0; p < pred.size(); ++p) pairs.push_back({iou(pred[p], gt[g]), g, p});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<double> out(gt.size(), 0.0);
  std::vector<std::uint8_t> gt_used(gt.size(), 0), pred_used(pred.size(), 0);
  for (const auto& pr : pairs) {
    if (gt_used[pr.g] || pred_used[pr.p] || pr.iou <= 0.0) continue;
    gt_used[pr.g] = pred_used[pr.p] = 1;
    out[pr.g] = pr.iou;
  }
  return out;
}

struct LocalizationReport {
  std::size_t maps = 0;
  std::size_t objects = 0;
  std::size_t localized = 0;  // matched IoU >= iou_threshold
  double iou_threshold = 0.8;
  double mean_iou = 0.0;

  double fraction() const { return objects ? static_cast<double>(localized) / static_cast<double>(objects) : 0.0; }
};

// Planted maps with one or two objects from the default stream law at the
// given noise, held out on stream id 0x10c of `seed`. MaskCut runs on the raw
// patches with kernel k for n_iters rounds.
inline LocalizationReport verify_maskcut_localization(std::size_t maps, double noise_sigma, std::uint64_t seed,
                                                      const KernelSpec& k = {},
                                                      std::size_t n_iters = kDefaultMaskCutIterations,
                                                      double iou_threshold = 0.8) {
  StreamConfig cfg;
  cfg.max_objects_per_image = 2;
  cfg.mean_labels_per_image = 1.5;
  cfg.cooccur_bias = 0.0;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  const Stream stream(cfg);
  LocalizationReport r;
  r.maps = maps;
  r.iou_threshold = iou_threshold;
  double iou_sum = 0.0;
  for (const auto& s : stream.held_out(maps, 0x10c)) {
    std::vector<Box> gt, pred;
    for (const auto& o : oracle_view(s).gt_boxes) gt.push_back(o.box);
    for (const auto& it : maskcut(s.raw, k, n_iters).iterations) pred.push_back(it.bbox);
    for (double v : greedy_match_iou(pred, gt)) {
      ++r.objects;
      r.localized += v >= iou_threshold;
      iou_sum += v;
    }
  }
  r.mean_iou = r.objects ? iou_sum / static_cast<double>(r.objects) : 0.0;
  return r;
}

struct BalanceReport {
  std::vector<double> rebalanced_ratio;  // one per seed, over all classes
  std::vector<double> vanilla_ratio;
  double worst_rebalanced = 0.0;
  double best_vanilla = std::numeric_limits<double>::infinity();
};

// Class c of n_classes is drawn with weight ratio^(-c/(n_classes-1)), so the
// head/tail frequency ratio is `ratio`. Both buffers see the same item
// sequence per seed; imbalance is max/min stored count over all classes
// (infinite when a class is absent).
inline BalanceReport verify_buffer_balance(std::size_t n_classes, double ratio, std::size_t capacity,
                                           std::size_t insertions, const std::vector<std::uint64_t>& seeds) {
  if (n_classes < 2) throw Error(ErrorKind::invalid_input, "buffer balance needs at least 2 classes");
  std::vector<double> w(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c)
    w[c] = std::pow(ratio, -static_cast<double>(c) / static_cast<double>(n_classes - 1));
  std::vector<int> classes(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) classes[c] = static_cast<int>(c);
  BalanceReport r;
  for (std::uint64_t seed : seeds) {
    Rng draw = make_rng(seed, 0);
    Rng rb_rng = make_rng(seed, 1), van_rng = make_rng(seed, 2);
    std::discrete_distribution<int> pick(w.begin(), w.end());
    MemoryBuffer<MemoryItem> rebalanced(capacity), vanilla(capacity);
    for (std::size_t i = 0; i < insertions; ++i) {
      MemoryItem item;
      item.label = pick(draw);
      item.area = 1;
      buffer_insert(rebalanced, item, rb_rng);
      vanilla_reservoir_insert(vanilla, std::move(item), i + 1, van_rng);
    }
    r.rebalanced_ratio.push_back(imbalance_ratio(rebalanced.class_counts(), classes));
    r.vanilla_ratio.push_back(imbalance_ratio(vanilla.class_counts(), classes));
    r.worst_rebalanced = std::max(r.worst_rebalanced, r.rebalanced_ratio.back());
    r.best_vanilla = std::min(r.best_vanilla, r.vanilla_ratio.back());
  }
  return r;
}

}  // namespace cuter
