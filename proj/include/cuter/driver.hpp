#pragma once

// End-to-end online training loop: stream batches are encoded and cut,
// cut-outs are scored and filtered into the replay buffer, stream and replay
// losses drive one SGD step per batch, and evaluation rows are recorded at
// task ends (and optionally every few steps).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cuter/assessor.hpp"
#include "cuter/error.hpp"
#include "cuter/metrics.hpp"
#include "cuter/model.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/replay.hpp"
#include "cuter/rng.hpp"
#include "cuter/spectral_cut.hpp"
#include "cuter/stream.hpp"

namespace cuter {

inline KernelSpec fixed_bandwidth_kernel(double sigma) {
  KernelSpec k;
  k.sigma = sigma;
  return k;
}

enum class Variant { rs_baseline, cutrep, cutrep_reg, cuter, cuter_reg };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::rs_baseline: return "rs_baseline";
    case Variant::cutrep: return "cutrep";
    case Variant::cutrep_reg: return "cutrep_reg";
    case Variant::cuter: return "cuter";
    case Variant::cuter_reg: return "cuter_reg";
  }
  return "cuter_reg";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::rs_baseline, Variant::cutrep, Variant::cutrep_reg, Variant::cuter, Variant::cuter_reg})
    if (to_string(v) == s) return v;
  throw Error(ErrorKind::invalid_input, "unknown variant '" + s + "'");
}

inline bool uses_cut(Variant v) noexcept { return v != Variant::rs_baseline; }
inline bool uses_rebalance(Variant v) noexcept { return v == Variant::cuter || v == Variant::cuter_reg; }
inline bool uses_regularizer(Variant v) noexcept { return v == Variant::cutrep_reg || v == Variant::cuter_reg; }

// How stream samples supervise classes outside their observed labels.
//   task_restricted:  only the current task's classes enter the loss
//   seen_as_negative: every active class enters; unobserved ones as negatives
enum class LabelMode { task_restricted, seen_as_negative };

inline std::string to_string(LabelMode m) {
  return m == LabelMode::seen_as_negative ? "seen_as_negative" : "task_restricted";
}

inline LabelMode label_mode_from_string(const std::string& s) {
  if (s == "task_restricted") return LabelMode::task_restricted;
  if (s == "seen_as_negative") return LabelMode::seen_as_negative;
  throw Error(ErrorKind::invalid_input, "unknown label mode '" + s + "'");
}

struct RunConfig {
  StreamConfig stream;  // stream.seed is replaced by `seed` at run time
  KernelSpec kernel;    // MaskCut similarity
  KernelSpec graph_kernel = fixed_bandwidth_kernel(2.0);  // regularizer and Fiedler probe
  SelectionPolicy selection;
  RegularizerSpec regularizer;
  AsymLossParams asl{0.0, 1.0};  // milder negative focusing than the loss default suits the sparse labels
  std::size_t n_iters_maskcut = kDefaultMaskCutIterations;
  std::size_t capacity = 200;
  Accounting accounting = Accounting::count;
  double lr = 1.0;
  double momentum = 0.9;
  std::size_t replay_batch = 4;
  std::size_t stream_batch = 8;
  std::size_t eval_every = 0;  // 0: evaluate at task ends only
  Variant variant = Variant::cuter_reg;
  std::uint64_t seed = 0;
  std::size_t dim_feat = 24;
  double encoder_gain = 3.0;
  LabelMode label_mode = LabelMode::task_restricted;
  bool regularize_replay = false;
  bool align_labels = true;  // keep a crop only if its label is one of the sample's given labels
  std::size_t eval_samples = 200;
  std::size_t probe_samples = 32;

  void validate() const {
    stream.validate();
    kernel.validate();
    selection.validate();
    regularizer.validate();
    asl.validate();
    auto fail = [](const std::string& m) { throw Error(ErrorKind::configuration, m); };
    if (n_iters_maskcut < 1) fail("n_iters_maskcut must be >= 1");
    if (capacity < 1) fail("capacity must be >= 1");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (stream_batch < 1) fail("stream_batch must be >= 1");
    if (dim_feat < 1) fail("dim_feat must be >= 1");
    if (eval_samples < 1) fail("eval_samples must be >= 1");
    if (probe_samples < 1) fail("probe_samples must be >= 1");
    graph_kernel.validate();
    if (uses_regularizer(variant) && regularizer.active() && graph_kernel.kind != KernelKind::gaussian)
      fail("regularized variants require a gaussian graph kernel");
  }
};

// Seed streams split from RunConfig::seed.
namespace seed_stream {
inline constexpr std::uint64_t model_init = 0x10;
inline constexpr std::uint64_t buffer = 0x20;
inline constexpr std::uint64_t replay = 0x30;
inline constexpr std::uint64_t eval_set = 0;   // Stream::held_out stream id
inline constexpr std::uint64_t probe_set = 1;  // Stream::held_out stream id
}  // namespace seed_stream

struct MetricRow {
  std::string run_id;
  int task_id = 0;
  std::size_t step = 0;
  double mAP = 0.0;
  double CF1 = 0.0;
  double OF1 = 0.0;
  double AP50 = 0.0;
  double mean_fiedler = 0.0;
  double buffer_ratio = 0.0;  // max/min stored class count, 0 while empty
  bool task_end = false;
};

struct FiedlerPoint {
  std::size_t step = 0;
  int task_id = 0;
  double mean_fiedler = 0.0;
  double ap50 = 0.0;
};

struct BufferItemMeta {
  std::vector<int> labels;
  double confidence = 1.0;
  std::size_t area = 0;
};

struct BufferSnapshot {
  int task_id = 0;
  std::size_t capacity = 0;
  std::size_t used = 0;
  Accounting accounting = Accounting::count;
  ClassHistogram histogram;
  std::vector<BufferItemMeta> items;
};

struct RunSummary {
  Aggregate mAP, CF1, OF1;
  double final_fiedler = 0.0;
  double final_ap50 = 0.0;
};

struct RunArtifacts {
  std::string run_id;
  RunConfig config;
  std::vector<MetricRow> metrics;
  std::vector<FiedlerPoint> fiedler;
  std::vector<BufferSnapshot> buffers;  // one per task end
  ModelParams final_params;
  RunSummary summary;
  std::size_t steps = 0;
  std::size_t stream_samples = 0;
};

inline std::string run_id_of(const RunConfig& cfg) {
  return to_string(cfg.variant) + "-s" + std::to_string(cfg.seed);
}

// Mean Fiedler value of the encoded probes under graph_kernel and AP50 of
// their MaskCut boxes (cut_kernel) against the planted boxes.
inline FiedlerPoint track_fiedler(const ModelParams& p, const std::vector<StreamSample>& probes,
                                  const KernelSpec& cut_kernel, const KernelSpec& graph_kernel, std::size_t n_iters) {
  if (probes.empty()) throw Error(ErrorKind::invalid_input, "probe set is empty");
  std::vector<FeatureMap> feats;
  std::vector<std::vector<Box>> pred, gt;
  feats.reserve(probes.size());
  for (const auto& s : probes) {
    feats.push_back(encode(p, s.raw));
    std::vector<Box> boxes;
    for (const auto& it : maskcut(feats.back(), cut_kernel, n_iters).iterations) boxes.push_back(it.bbox);
    pred.push_back(std::move(boxes));
    std::vector<Box> truth;
    for (const auto& o : oracle_view(s).gt_boxes) truth.push_back(o.box);
    gt.push_back(std::move(truth));
  }
  FiedlerPoint fp;
  fp.mean_fiedler = average_fiedler(feats, graph_kernel).mean_fiedler;
  fp.ap50 = ap50_dataset(pred, gt);
  return fp;
}

namespace detail {

inline std::vector<int> classes_up_to(const Schedule& s, std::size_t task) {
  std::vector<int> out;
  for (std::size_t t = 0; t <= task && t < s.task_classes.size(); ++t)
    out.insert(out.end(), s.task_classes[t].begin(), s.task_classes[t].end());
  return out;
}

// Classification metrics on the held-out set over classes [0, n_classes).
inline ClassificationMetrics evaluate(const ModelParams& p, const std::vector<StreamSample>& eval_set,
                                      std::size_t n_classes) {
  EvalRecord rec;
  for (const auto& s : eval_set) {
    auto probs = predict(p, encode(p, s.raw));
    probs.resize(n_classes);
    std::vector<std::uint8_t> truth(n_classes, 0);
    for (int c : oracle_view(s).full_labels)
      if (static_cast<std::size_t>(c) < n_classes) truth[static_cast<std::size_t>(c)] = 1;
    rec.scores.push_back(std::move(probs));
    rec.truths.push_back(std::move(truth));
  }
  return map_cf1_of1(rec);
}

template <class Item>
BufferSnapshot snapshot(const MemoryBuffer<Item>& buf, int task_id) {
  BufferSnapshot s;
  s.task_id = task_id;
  s.capacity = buf.capacity();
  s.used = buf.used();
  s.accounting = buf.accounting();
  s.histogram = buf.class_counts();
  for (const auto& item : buf.items()) {
    BufferItemMeta m;
    const auto labels = labels_of(item);
    m.labels.assign(labels.begin(), labels.end());
    if constexpr (std::is_same_v<Item, MemoryItem>) m.confidence = item.confidence;
    m.area = area_of(item);
    s.items.push_back(std::move(m));
  }
  return s;
}

inline double buffer_ratio(const ClassHistogram& h) { return h.empty() ? 0.0 : imbalance_ratio(h); }

}  // namespace detail

// Runs the online protocol once over the configured stream.
inline RunArtifacts run_mocl(RunConfig cfg) {
  cfg.stream.seed = cfg.seed;
  cfg.validate();
  const Variant v = cfg.variant;
  RunArtifacts art;
  art.run_id = run_id_of(cfg);
  art.config = cfg;

  Stream stream(cfg.stream);
  const Schedule& sched = stream.schedule();
  const std::size_t n_classes = cfg.stream.total_classes();
  const auto eval_set = stream.held_out(cfg.eval_samples, seed_stream::eval_set);
  const auto probe_set = stream.held_out(cfg.probe_samples, seed_stream::probe_set);

  Rng init_rng = make_rng(cfg.seed, seed_stream::model_init);
  Rng buffer_rng = make_rng(cfg.seed, seed_stream::buffer);
  Rng replay_rng = make_rng(cfg.seed, seed_stream::replay);
  ModelParams params = init_params(cfg.stream.dim_in, cfg.dim_feat, n_classes, 0, init_rng, 0.01, cfg.encoder_gain);
  SgdState opt;

  RegularizerSpec reg = cfg.regularizer;
  if (!uses_regularizer(v)) reg.alpha = 0.0;
  SelectionPolicy policy = cfg.selection;
  policy.class_aware = uses_rebalance(v);

  MemoryBuffer<MemoryItem> crops(cfg.capacity, cfg.accounting);
  MemoryBuffer<StoredSample> whole(cfg.capacity, cfg.accounting);
  std::size_t offered = 0;
  std::size_t step = 0;
  std::vector<double> task_map, task_cf1, task_of1;

  auto record = [&](int task_id, bool task_end) {
    const std::size_t seen = detail::classes_up_to(sched, static_cast<std::size_t>(task_id)).size();
    const auto cm = detail::evaluate(params, eval_set, seen);
    FiedlerPoint fp = track_fiedler(params, probe_set, cfg.kernel, cfg.graph_kernel, cfg.n_iters_maskcut);
    fp.step = step;
    fp.task_id = task_id;
    MetricRow row;
    row.run_id = art.run_id;
    row.task_id = task_id;
    row.step = step;
    row.mAP = cm.mAP;
    row.CF1 = cm.CF1;
    row.OF1 = cm.OF1;
    row.AP50 = fp.ap50;
    row.mean_fiedler = fp.mean_fiedler;
    row.buffer_ratio = detail::buffer_ratio(uses_cut(v) ? crops.class_counts() : whole.class_counts());
    row.task_end = task_end;
    art.metrics.push_back(row);
    art.fiedler.push_back(fp);
    if (task_end) {
      task_map.push_back(cm.mAP);
      task_cf1.push_back(cm.CF1);
      task_of1.push_back(cm.OF1);
      art.buffers.push_back(uses_cut(v) ? detail::snapshot(crops, task_id) : detail::snapshot(whole, task_id));
    }
  };

  for (std::size_t task = 0; task < cfg.stream.n_tasks; ++task) {
    const auto active = detail::classes_up_to(sched, task);
    const auto& current = sched.task_classes[task];
    params.active_classes = active.size();
    const std::size_t n_act = active.size();

    while (auto batch = stream.next_batch(cfg.stream_batch)) {
      try {
        std::vector<TrainExample> stream_examples;
        std::vector<std::vector<Candidate>> candidates;  // per sample
        for (const auto& s : *batch) {
          TrainExample ex;
          ex.raw = s.raw;
          ex.targets.assign(n_act, 0.0);
          ex.observed.assign(n_act, cfg.label_mode == LabelMode::seen_as_negative ? 1 : 0);
          for (int c : current) ex.observed[static_cast<std::size_t>(c)] = 1;
          for (int c : s.observed_labels) ex.targets[static_cast<std::size_t>(c)] = 1.0;
          ex.regularize = true;
          stream_examples.push_back(std::move(ex));
          if (uses_cut(v)) {
            const FeatureMap feats = encode(params, s.raw);
            auto& mine = candidates.emplace_back();
            for (const auto& it : maskcut(feats, cfg.kernel, cfg.n_iters_maskcut).iterations) {
              auto probs = predict(params, feats, it.bbox);
              // Crops are scored against the current task's classes only.
              for (std::size_t c = 0; c < probs.size(); ++c)
                if (std::find(current.begin(), current.end(), static_cast<int>(c)) == current.end()) probs[c] = 0.0;
              mine.push_back({crop(s.raw, it.bbox), std::move(probs)});
            }
          }
        }

        std::vector<TrainExample> replay_examples;
        auto to_example = [&](const PatchGrid& raw, std::vector<double> targets, std::vector<std::uint8_t> observed) {
          TrainExample ex;
          ex.raw = raw;
          ex.targets = std::move(targets);
          ex.observed = std::move(observed);
          ex.regularize = cfg.regularize_replay;
          replay_examples.push_back(std::move(ex));
        };
        if (cfg.replay_batch > 0) {
          if (uses_cut(v)) {
            if (auto items = sample_replay_batch(crops, cfg.replay_batch, replay_rng))
              for (const auto& m : *items) {
                std::vector<double> t(n_act, 0.0);
                t[static_cast<std::size_t>(m.label)] = 1.0;
                to_example(m.crop, std::move(t), std::vector<std::uint8_t>(n_act, 1));
              }
          } else if (auto items = sample_replay_batch(whole, cfg.replay_batch, replay_rng)) {
            for (const auto& m : *items) {
              std::vector<double> t(n_act, 0.0);
              std::vector<std::uint8_t> o(n_act, cfg.label_mode == LabelMode::seen_as_negative ? 1 : 0);
              for (int c : sched.task_classes[static_cast<std::size_t>(m.task_id)]) o[static_cast<std::size_t>(c)] = 1;
              for (int c : m.labels) t[static_cast<std::size_t>(c)] = 1.0;
              to_example(m.raw, std::move(t), std::move(o));
            }
          }
        }

        auto lg = loss_and_gradients(params, stream_examples, cfg.asl, cfg.graph_kernel, reg);
        if (!replay_examples.empty())
          add_scaled(lg.grads, loss_and_gradients(params, replay_examples, cfg.asl, cfg.graph_kernel, reg).grads, 1.0);
        params = sgd_step(params, lg.grads, cfg.lr, cfg.momentum, opt);

        for (const auto& s : *batch) {
          crops.record_stream_labels(s.observed_labels);
          whole.record_stream_labels(s.observed_labels);
        }
        if (uses_cut(v)) {
          for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto& given = (*batch)[i].observed_labels;
            for (auto& item : select_candidates(candidates[i], policy, crops.stream_class_freq())) {
              if (cfg.align_labels && std::find(given.begin(), given.end(), item.label) == given.end()) continue;
              if (uses_rebalance(v)) {
                buffer_insert(crops, std::move(item), buffer_rng);
              } else {
                vanilla_reservoir_insert(crops, std::move(item), ++offered, buffer_rng);
              }
            }
          }
        } else {
          for (const auto& s : *batch) {
            if (s.observed_labels.empty()) continue;
            vanilla_reservoir_insert(whole, StoredSample{s.raw, s.observed_labels, s.task_id}, ++offered,
                                     buffer_rng);
          }
        }
        art.stream_samples += batch->size();
        ++step;
      } catch (const Error& e) {
        throw Error(e.kind(), "run " + art.run_id + " aborted at step " + std::to_string(step) + ": " + e.what());
      }
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && stream.consumed_in_task() < cfg.stream.samples_per_task)
        record(static_cast<int>(task), false);
    }
    record(static_cast<int>(task), true);
    stream.advance_task();
  }

  art.steps = step;
  art.final_params = params;
  art.summary.mAP = aggregate(task_map);
  art.summary.CF1 = aggregate(task_cf1);
  art.summary.OF1 = aggregate(task_of1);
  art.summary.final_fiedler = art.fiedler.back().mean_fiedler;
  art.summary.final_ap50 = art.fiedler.back().ap50;
  return art;
}

struct AblationRow {
  Variant variant = Variant::cuter_reg;
  std::uint64_t seed = 0;
  RunSummary summary;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // variant-major, seeds in the given order

  // Seed-mean of a summary field for one variant.
  template <class F>
  double mean(Variant v, F&& field) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.variant == v) {
        s += field(r.summary);
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

// Runs every variant on the same seeds (hence the same streams).
inline AblationTable run_ablation(const RunConfig& base, const std::vector<Variant>& variants,
                                  const std::vector<std::uint64_t>& seeds) {
  if (variants.empty()) throw Error(ErrorKind::invalid_input, "ablation needs at least one variant");
  if (seeds.empty()) throw Error(ErrorKind::invalid_input, "ablation needs at least one seed");
  AblationTable t;
  for (Variant v : variants)
    for (std::uint64_t s : seeds) {
      RunConfig cfg = base;
      cfg.variant = v;
      cfg.seed = s;
      t.rows.push_back({v, s, run_mocl(cfg).summary});
    }
  return t;
}

}  // namespace cuter
