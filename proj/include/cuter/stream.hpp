#pragma once

// Synthetic multi-label online stream: tasks with disjoint label sets,
// planted-object patch grids, long-tailed class frequencies and labels
// restricted to the current task. Ground truth is reachable only through
// oracle_view().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/linalg.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/rng.hpp"
#include "cuter/spectral_cut.hpp"

namespace cuter {

struct StreamConfig {
  std::size_t n_tasks = 5;
  std::size_t classes_per_task = 4;
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;
  std::size_t dim_in = 16;
  double mean_labels_per_image = 2.4;
  std::size_t max_objects_per_image = 4;
  double imbalance_ratio = 10.0;
  double cooccur_bias = 0.3;
  double noise_sigma = 0.1;
  double max_prototype_cosine = 0.3;
  std::size_t samples_per_task = 200;
  std::uint64_t seed = 0;

  std::size_t total_classes() const noexcept { return n_tasks * classes_per_task; }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::configuration, m); };
    if (n_tasks < 1) fail("n_tasks must be >= 1");
    if (classes_per_task < 1) fail("classes_per_task must be >= 1");
    if (grid_h < 4 || grid_w < 4) fail("grid must be at least 4x4");
    if (dim_in < 1) fail("dim_in must be >= 1");
    if (max_objects_per_image < 1 || max_objects_per_image > 4) fail("max_objects_per_image must lie in [1, 4]");
    if (!(mean_labels_per_image >= 1.0 && mean_labels_per_image <= static_cast<double>(max_objects_per_image)))
      fail("mean_labels_per_image must lie in [1, max_objects_per_image]");
    if (!(imbalance_ratio >= 1.0)) fail("imbalance_ratio must be >= 1");
    if (!(cooccur_bias >= 0.0 && cooccur_bias < 1.0)) fail("cooccur_bias must lie in [0, 1)");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
    if (!(max_prototype_cosine > -1.0 && max_prototype_cosine < 1.0))
      fail("max_prototype_cosine must lie in (-1, 1)");
    if (samples_per_task < 1) fail("samples_per_task must be >= 1");
  }
};

struct Schedule {
  std::vector<std::vector<int>> task_classes;  // disjoint, in task order
  Matrix prototypes;                           // one unit row per class
  std::vector<double> background;              // unit vector
  std::vector<double> class_weights;           // normalized sampling weights
  std::vector<int> head_classes;
  std::vector<int> tail_classes;

  std::size_t total_classes() const noexcept { return prototypes.rows(); }

  int task_of(int cls) const {
    for (std::size_t t = 0; t < task_classes.size(); ++t)
      for (int c : task_classes[t])
        if (c == cls) return static_cast<int>(t);
    return -1;
  }
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = nd(rng);
    n = norm2(v);
  } while (n < 1e-9);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace detail

// Classes are assigned to tasks in index order. Frequency ranks are a seeded
// permutation of the classes; weight(rank r) = ratio^(-r/(C-1)).
inline Schedule generate_schedule(const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t n_classes = cfg.total_classes();
  Rng rng = make_rng(cfg.seed, 0x5c4ed);

  Schedule s;
  s.task_classes.resize(cfg.n_tasks);
  for (std::size_t c = 0; c < n_classes; ++c)
    s.task_classes[c / cfg.classes_per_task].push_back(static_cast<int>(c));

  // Greedy rejection sampling; row n_classes is the background prototype.
  std::vector<std::vector<double>> protos;
  constexpr int max_tries = 20000;
  for (std::size_t k = 0; k <= n_classes; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < max_tries && !placed; ++attempt) {
      auto v = detail::random_unit(rng, cfg.dim_in);
      placed = std::all_of(protos.begin(), protos.end(),
                           [&](const auto& p) { return dot(p, v) <= cfg.max_prototype_cosine; });
      if (placed) protos.push_back(std::move(v));
    }
    if (!placed)
      throw Error(ErrorKind::configuration,
                  "cannot place " + std::to_string(n_classes + 1) + " prototypes in dimension " +
                      std::to_string(cfg.dim_in) + " with pairwise cosine <= " +
                      std::to_string(cfg.max_prototype_cosine));
  }
  s.prototypes = Matrix(n_classes, cfg.dim_in);
  for (std::size_t c = 0; c < n_classes; ++c)
    std::copy(protos[c].begin(), protos[c].end(), s.prototypes.row(c).begin());
  s.background = protos[n_classes];

  std::vector<int> by_rank(n_classes);
  std::iota(by_rank.begin(), by_rank.end(), 0);
  std::shuffle(by_rank.begin(), by_rank.end(), rng);
  s.class_weights.assign(n_classes, 0.0);
  for (std::size_t r = 0; r < n_classes; ++r) {
    const double frac = n_classes > 1 ? static_cast<double>(r) / static_cast<double>(n_classes - 1) : 0.0;
    s.class_weights[by_rank[r]] = std::pow(cfg.imbalance_ratio, -frac);
  }
  const double total = std::accumulate(s.class_weights.begin(), s.class_weights.end(), 0.0);
  for (double& w : s.class_weights) w /= total;

  // Head: top fifth of the frequency ranks; tail: bottom half.
  const std::size_t n_head = std::max<std::size_t>(1, n_classes / 5);
  for (std::size_t r = 0; r < n_classes; ++r) {
    if (r < n_head) s.head_classes.push_back(by_rank[r]);
    if (r >= n_classes / 2 && r >= n_head) s.tail_classes.push_back(by_rank[r]);
  }
  return s;
}

struct PlantedObject {
  int cls = 0;
  Box box;
};

struct OracleView {
  std::vector<int> full_labels;          // sorted, distinct
  std::vector<PlantedObject> gt_boxes;  // one per planted object
};

// One stream element. The learner sees raw patches, the task-restricted
// labels and the task id; full labels and boxes stay private.
class StreamSample {
 public:
  PatchGrid raw;
  std::vector<int> observed_labels;  // sorted
  int task_id = 0;

  friend OracleView oracle_view(const StreamSample& s);
  friend class Stream;
  friend StreamSample make_sample(PatchGrid raw, std::vector<int> observed, int task_id, OracleView hidden);

 private:
  OracleView hidden_;
};

inline OracleView oracle_view(const StreamSample& s) { return s.hidden_; }

// Assembles a sample from parts; for fixtures and file loaders.
inline StreamSample make_sample(PatchGrid raw, std::vector<int> observed, int task_id, OracleView hidden) {
  StreamSample s;
  s.raw = std::move(raw);
  s.observed_labels = std::move(observed);
  s.task_id = task_id;
  s.hidden_ = std::move(hidden);
  return s;
}

namespace detail {

// True when b, grown by one patch on every side, does not touch a.
inline bool separated(const Box& a, const Box& b) {
  return a.h2 + 1 < b.h1 || b.h2 + 1 < a.h1 || a.w2 + 1 < b.w1 || b.w2 + 1 < a.w1;
}

}  // namespace detail

// Draws one planted sample. Object count k = 1 + Binomial(K-1, (mean-1)/(K-1))
// with K = max_objects_per_image. A task sample's first object is drawn from
// the task's own classes by class weight so it carries at least one observed
// label; the other object classes are i.i.d. by class weight over all classes; with probability cooccur_bias a
// sample holding a head class also receives a uniformly chosen tail class.
// Each placement attempt redraws size (2..grid/2 per side) and position;
// after 50 failed attempts the object is dropped.
inline StreamSample draw_sample(const Schedule& s, const StreamConfig& cfg, int task_id, Rng& rng) {
  const int spare = static_cast<int>(cfg.max_objects_per_image) - 1;
  std::binomial_distribution<int> extra(spare, spare > 0 ? (cfg.mean_labels_per_image - 1.0) / spare : 0.0);
  std::discrete_distribution<int> pick_class(s.class_weights.begin(), s.class_weights.end());
  const int k = 1 + extra(rng);

  std::vector<int> classes;
  if (task_id >= 0) {
    const auto& own = s.task_classes[static_cast<std::size_t>(task_id)];
    std::vector<double> w;
    for (int c : own) w.push_back(s.class_weights[static_cast<std::size_t>(c)]);
    classes.push_back(own[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)]);
  }
  while (static_cast<int>(classes.size()) < k) classes.push_back(pick_class(rng));
  if (cfg.cooccur_bias > 0.0 && !s.tail_classes.empty()) {
    const bool has_head = std::any_of(classes.begin(), classes.end(), [&](int c) {
      return std::find(s.head_classes.begin(), s.head_classes.end(), c) != s.head_classes.end();
    });
    if (has_head && uniform01(rng) < cfg.cooccur_bias) {
      std::uniform_int_distribution<std::size_t> pick_tail(0, s.tail_classes.size() - 1);
      const int tail = s.tail_classes[pick_tail(rng)];
      if (classes.size() < cfg.max_objects_per_image) {
        classes.push_back(tail);
      } else {
        classes.back() = tail;
      }
    }
  }

  const int gh = static_cast<int>(cfg.grid_h), gw = static_cast<int>(cfg.grid_w);
  std::uniform_int_distribution<int> side_h(2, std::max(2, gh / 2));
  std::uniform_int_distribution<int> side_w(2, std::max(2, gw / 2));
  std::vector<PlantedObject> objects;
  for (int cls : classes) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int h = side_h(rng), w = side_w(rng);
      std::uniform_int_distribution<int> row(0, gh - h), col(0, gw - w);
      const Box b{row(rng), col(rng), 0, 0};
      const Box box{b.h1, b.w1, b.h1 + h - 1, b.w1 + w - 1};
      if (std::all_of(objects.begin(), objects.end(),
                      [&](const PlantedObject& o) { return detail::separated(o.box, box); })) {
        objects.push_back({cls, box});
        break;
      }
    }
  }

  PatchGrid raw(cfg.grid_h, cfg.grid_w, cfg.dim_in);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      std::span<const double> proto = s.background;
      for (const auto& o : objects)
        if (o.box.contains(r, c)) proto = s.prototypes.row(static_cast<std::size_t>(o.cls));
      auto p = raw.patch(raw.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
      for (std::size_t d = 0; d < cfg.dim_in; ++d) p[d] = proto[d] + cfg.noise_sigma * noise(rng);
    }

  OracleView hidden;
  hidden.gt_boxes = objects;
  for (const auto& o : objects) hidden.full_labels.push_back(o.cls);
  std::sort(hidden.full_labels.begin(), hidden.full_labels.end());
  hidden.full_labels.erase(std::unique(hidden.full_labels.begin(), hidden.full_labels.end()),
                           hidden.full_labels.end());

  std::vector<int> observed;
  if (task_id >= 0) {
    const auto& allowed = s.task_classes[static_cast<std::size_t>(task_id)];
    for (int c : hidden.full_labels)
      if (std::find(allowed.begin(), allowed.end(), c) != allowed.end()) observed.push_back(c);
  }
  return make_sample(std::move(raw), std::move(observed), task_id, std::move(hidden));
}

// Single-pass producer over the task sequence.
class Stream {
 public:
  explicit Stream(StreamConfig cfg) : cfg_(cfg), schedule_(generate_schedule(cfg_)), rng_(make_rng(cfg_.seed, 1)) {}

  const StreamConfig& config() const noexcept { return cfg_; }
  const Schedule& schedule() const noexcept { return schedule_; }
  std::size_t current_task() const noexcept { return task_; }
  bool finished() const noexcept { return task_ >= cfg_.n_tasks; }
  std::size_t consumed_in_task() const noexcept { return consumed_; }

  // Up to batch_size fresh samples of the current task; nullopt once the task
  // is exhausted (end-of-task signal) or all tasks are done.
  std::optional<std::vector<StreamSample>> next_batch(std::size_t batch_size) {
    if (finished() || consumed_ >= cfg_.samples_per_task) return std::nullopt;
    const std::size_t take = std::min(batch_size, cfg_.samples_per_task - consumed_);
    std::vector<StreamSample> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
      out.push_back(draw_sample(schedule_, cfg_, static_cast<int>(task_), rng_));
    consumed_ += take;
    return out;
  }

  // Moves to the next task; returns false when none is left.
  bool advance_task() {
    if (finished()) return false;
    ++task_;
    consumed_ = 0;
    return !finished();
  }

  // Samples from the same law on an independent seed stream, labelled for
  // every class (task_id -1, observed labels empty). Used for evaluation.
  std::vector<StreamSample> held_out(std::size_t count, std::uint64_t stream_id) const {
    Rng rng = make_rng(cfg_.seed, 0x7e57 + stream_id);
    std::vector<StreamSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(draw_sample(schedule_, cfg_, -1, rng));
    return out;
  }

 private:
  StreamConfig cfg_;
  Schedule schedule_;
  Rng rng_;
  std::size_t task_ = 0;
  std::size_t consumed_ = 0;
};

}  // namespace cuter
