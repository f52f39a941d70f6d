#pragma once

// Multi-label classification metrics (mAP, CF1, OF1), box IoU and AP50, and
// the task-averaged / final aggregation.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/spectral_cut.hpp"

namespace cuter {

struct EvalRecord {
  std::vector<std::vector<double>> scores;        // [sample][class] in [0, 1]
  std::vector<std::vector<std::uint8_t>> truths;  // [sample][class] 0 or 1

  std::size_t samples() const noexcept { return scores.size(); }
  std::size_t classes() const noexcept { return scores.empty() ? 0 : scores.front().size(); }

  void validate() const {
    if (scores.size() != truths.size()) throw Error(ErrorKind::invalid_input, "scores and truths differ in length");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != classes() || truths[i].size() != classes())
        throw Error(ErrorKind::invalid_input, "ragged evaluation record");
      for (double s : scores[i])
        if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::invalid_input, "score outside [0, 1]");
    }
  }
};

// Mean over positives of the precision at each positive's rank, ranks by
// descending score with ties kept in sample order. nullopt without positives.
inline std::optional<double> average_precision(const std::vector<double>& scores,
                                               const std::vector<std::uint8_t>& truths) {
  if (scores.size() != truths.size()) throw Error(ErrorKind::invalid_input, "scores and truths differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (truths[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

struct ClassificationMetrics {
  double mAP = 0.0;
  double CF1 = 0.0;
  double OF1 = 0.0;
  std::size_t skipped_classes = 0;  // no positives, left out of mAP
};

namespace detail {

inline double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace detail

// mAP over classes with a positive; CF1 is the mean per-class F1 and OF1 the
// F1 of pooled counts, both with predictions score >= threshold.
inline ClassificationMetrics map_cf1_of1(const EvalRecord& rec, double threshold = 0.5) {
  rec.validate();
  ClassificationMetrics m;
  const std::size_t n = rec.samples(), k = rec.classes();
  double ap_sum = 0.0, f1_sum = 0.0;
  std::size_t ap_count = 0, tp_all = 0, fp_all = 0, fn_all = 0;
  std::vector<double> col(n);
  std::vector<std::uint8_t> truth(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = rec.scores[i][c];
      truth[i] = rec.truths[i][c];
      const bool pred = col[i] >= threshold;
      tp += pred && truth[i];
      fp += pred && !truth[i];
      fn += !pred && truth[i];
    }
    if (const auto ap = average_precision(col, truth)) {
      ap_sum += *ap;
      ++ap_count;
    } else {
      ++m.skipped_classes;
    }
    f1_sum += detail::f1(tp, fp, fn);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  m.mAP = ap_count ? ap_sum / static_cast<double>(ap_count) : 0.0;
  m.CF1 = k ? f1_sum / static_cast<double>(k) : 0.0;
  m.OF1 = detail::f1(tp_all, fp_all, fn_all);
  return m;
}

// Intersection over union of inclusive patch boxes, by cell count.
inline double iou(const Box& a, const Box& b) {
  const int h = std::min(a.h2, b.h2) - std::max(a.h1, b.h1) + 1;
  const int w = std::min(a.w2, b.w2) - std::max(a.w1, b.w1) + 1;
  const int inter = h > 0 && w > 0 ? h * w : 0;
  const int uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline constexpr double kAp50Iou = 0.5;

// Class-agnostic AP at IoU 0.5 for one image. Predictions are taken in the
// given order (confidence order); each claims the best still-unmatched
// ground-truth box with IoU >= 0.5. AP is the mean, over ground-truth boxes,
// of the precision at the rank where each was matched (0 if never matched).
// An image without ground truth scores 1 with no predictions and 0 otherwise.
inline double ap50(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
  std::vector<std::uint8_t> taken(gt.size(), 0);
  std::size_t tp = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    std::size_t best = gt.size();
    double best_iou = kAp50Iou;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(pred[r], gt[g]);
      if (v >= best_iou && (best == gt.size() || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best == gt.size()) continue;
    taken[best] = 1;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(gt.size());
}

// Mean per-image AP50 over images holding at least one ground-truth box.
inline double ap50_dataset(const std::vector<std::vector<Box>>& pred, const std::vector<std::vector<Box>>& gt) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::invalid_input, "prediction and ground-truth lists differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].empty()) continue;
    sum += ap50(pred[i], gt[i]);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

struct Aggregate {
  double avg = 0.0;   // mean of the per-task evaluations on seen classes
  double last = 0.0;  // evaluation after the final task on all classes
};

// per_task[k] is the metric measured after task k on the classes of tasks
// 0..k; the final entry covers every class.
inline Aggregate aggregate(const std::vector<double>& per_task) {
  if (per_task.empty()) throw Error(ErrorKind::invalid_input, "aggregate needs at least one task");
  Aggregate a;
  a.avg = std::accumulate(per_task.begin(), per_task.end(), 0.0) / static_cast<double>(per_task.size());
  a.last = per_task.back();
  return a;
}

}  // namespace cuter
