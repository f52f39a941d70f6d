#pragma once

// Cut-out candidate selection with frequency-dependent confidence thresholds,
// a class-rebalanced reservoir buffer and the classic reservoir baseline.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/rng.hpp"

namespace cuter {

// A single-label cut-out.
struct MemoryItem {
  PatchGrid crop;
  int label = 0;
  double confidence = 1.0;
  std::size_t area = 1;  // patches in the crop

  friend bool operator==(const MemoryItem&, const MemoryItem&) = default;
};

// A whole stream sample with its task-restricted labels; stored by the
// reservoir baseline.
struct StoredSample {
  PatchGrid raw;
  std::vector<int> labels;
  int task_id = 0;

  friend bool operator==(const StoredSample&, const StoredSample&) = default;
};

inline std::span<const int> labels_of(const MemoryItem& m) { return {&m.label, 1}; }
inline std::span<const int> labels_of(const StoredSample& s) { return s.labels; }
inline std::size_t area_of(const MemoryItem& m) { return m.area; }
inline std::size_t area_of(const StoredSample& s) { return s.raw.patches(); }

inline MemoryItem make_memory_item(PatchGrid crop, int label, double confidence) {
  if (!(confidence > 0.0 && confidence <= 1.0))
    throw Error(ErrorKind::invalid_input, "confidence must lie in (0, 1]");
  MemoryItem m;
  m.area = crop.patches();
  if (m.area < 1) throw Error(ErrorKind::invalid_input, "crop must hold at least one patch");
  m.crop = std::move(crop);
  m.label = label;
  m.confidence = confidence;
  return m;
}

enum class Accounting { count, area };

inline std::string to_string(Accounting a) { return a == Accounting::area ? "area" : "count"; }

inline Accounting accounting_from_string(const std::string& s) {
  if (s == "count") return Accounting::count;
  if (s == "area") return Accounting::area;
  throw Error(ErrorKind::invalid_input, "unknown accounting '" + s + "'");
}

using ClassHistogram = std::map<int, std::size_t>;

template <class Item>
class MemoryBuffer {
 public:
  MemoryBuffer(std::size_t capacity, Accounting accounting = Accounting::count)
      : capacity_(capacity), accounting_(accounting) {
    if (capacity == 0) throw Error(ErrorKind::invalid_input, "buffer capacity must be positive");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  Accounting accounting() const noexcept { return accounting_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<Item>& items() const noexcept { return items_; }

  // Items held (count accounting) or patches held (area accounting).
  std::size_t used() const noexcept { return used_; }
  double fill_ratio() const noexcept { return static_cast<double>(used_) / static_cast<double>(capacity_); }

  std::size_t cost(const Item& item) const { return accounting_ == Accounting::area ? area_of(item) : 1; }
  bool fits(const Item& item) const { return used_ + cost(item) <= capacity_; }

  const ClassHistogram& class_counts() const noexcept { return class_counts_; }
  std::size_t class_count(int cls) const {
    const auto it = class_counts_.find(cls);
    return it == class_counts_.end() ? 0 : it->second;
  }

  // Running histogram of labels observed on the stream.
  const ClassHistogram& stream_class_freq() const noexcept { return stream_freq_; }
  void record_stream_labels(std::span<const int> labels) {
    for (int c : labels) ++stream_freq_[c];
  }

  void push(Item item) {
    if (cost(item) > capacity_)
      throw Error(ErrorKind::oversize, "item of size " + std::to_string(cost(item)) + " exceeds capacity " +
                                           std::to_string(capacity_));
    used_ += cost(item);
    for (int c : labels_of(item)) ++class_counts_[c];
    items_.push_back(std::move(item));
  }

  // Removes items_[i] by swapping in the last item.
  void erase(std::size_t i) {
    used_ -= cost(items_[i]);
    for (int c : labels_of(items_[i]))
      if (--class_counts_[c] == 0) class_counts_.erase(c);
    if (i + 1 != items_.size()) items_[i] = std::move(items_.back());
    items_.pop_back();
  }

 private:
  std::size_t capacity_;
  Accounting accounting_;
  std::vector<Item> items_;
  std::size_t used_ = 0;
  ClassHistogram class_counts_;
  ClassHistogram stream_freq_;
};

// Exact recount over the stored items.
template <class Item>
ClassHistogram class_histogram(const MemoryBuffer<Item>& buf) {
  ClassHistogram h;
  for (const auto& item : buf.items())
    for (int c : labels_of(item)) ++h[c];
  return h;
}

struct SelectionPolicy {
  double tau1 = 0.6;  // for classes rarer than half the most frequent class
  double tau2 = 0.8;
  bool class_aware = true;  // false: tau2 for every class
  static constexpr double second_max_cap = 0.5;

  void validate() const {
    if (!(tau1 > 0.0 && tau1 < tau2 && tau2 < 1.0))
      throw Error(ErrorKind::invalid_input, "thresholds must satisfy 0 < tau1 < tau2 < 1");
  }
  friend bool operator==(const SelectionPolicy&, const SelectionPolicy&) = default;
};

struct Candidate {
  PatchGrid crop;
  std::vector<double> probs;  // over active classes
};

// Confidence threshold applied to a candidate whose top class is `cls`.
inline double selection_threshold(int cls, const SelectionPolicy& policy, const ClassHistogram& stream_freq) {
  if (!policy.class_aware) return policy.tau2;
  std::size_t most = 0;
  for (const auto& [c, n] : stream_freq) most = std::max(most, n);
  const auto it = stream_freq.find(cls);
  const std::size_t mine = it == stream_freq.end() ? 0 : it->second;
  return 2 * mine < most ? policy.tau1 : policy.tau2;
}

// Admits a crop iff its top probability exceeds the threshold for its top
// class and its second-largest probability is below 0.5; admitted crops are
// labelled with the top class.
inline std::vector<MemoryItem> select_candidates(const std::vector<Candidate>& crops, const SelectionPolicy& policy,
                                                 const ClassHistogram& stream_freq) {
  policy.validate();
  std::vector<MemoryItem> out;
  for (const auto& cand : crops) {
    if (cand.probs.empty()) continue;
    std::size_t top = 0;
    for (std::size_t c = 1; c < cand.probs.size(); ++c)
      if (cand.probs[c] > cand.probs[top]) top = c;
    double second = 0.0;
    for (std::size_t c = 0; c < cand.probs.size(); ++c)
      if (c != top) second = std::max(second, cand.probs[c]);
    const double tau = selection_threshold(static_cast<int>(top), policy, stream_freq);
    if (cand.probs[top] > tau && second < SelectionPolicy::second_max_cap)
      out.push_back(make_memory_item(cand.crop, static_cast<int>(top), cand.probs[top]));
  }
  return out;
}

namespace detail {

template <class Item>
std::size_t random_index_of_class(const MemoryBuffer<Item>& buf, int cls, Rng& rng) {
  const std::size_t count = buf.class_count(cls);
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, count - 1)(rng);
  for (std::size_t i = 0; i < buf.size(); ++i)
    if (buf.items()[i].label == cls && pick-- == 0) return i;
  throw Error(ErrorKind::invalid_input, "class histogram out of sync with items");
}

inline int most_frequent_class(const ClassHistogram& h, Rng& rng) {
  std::size_t most = 0;
  for (const auto& [c, n] : h) most = std::max(most, n);
  std::vector<int> tied;
  for (const auto& [c, n] : h)
    if (n == most) tied.push_back(c);
  return tied[std::uniform_int_distribution<std::size_t>(0, tied.size() - 1)(rng)];
}

}  // namespace detail

// Rebalanced reservoir. Inserts while there is room; otherwise accepts with
// probability 1 - m/m_max (m: stored count of the item's class, m_max: the
// largest class count) and evicts random items of the most frequent class,
// chosen afresh for each eviction, until the item fits. Returns whether the
// item was stored.
inline bool buffer_insert(MemoryBuffer<MemoryItem>& buf, MemoryItem item, Rng& rng) {
  if (buf.cost(item) > buf.capacity())
    throw Error(ErrorKind::oversize, "item of area " + std::to_string(item.area) + " exceeds buffer capacity " +
                                         std::to_string(buf.capacity()));
  if (buf.fits(item)) {
    buf.push(std::move(item));
    return true;
  }
  std::size_t m_max = 0;
  for (const auto& [c, n] : buf.class_counts()) m_max = std::max(m_max, n);
  const double accept = m_max == 0 ? 1.0
                                   : 1.0 - static_cast<double>(buf.class_count(item.label)) /
                                               static_cast<double>(m_max);
  if (!(uniform01(rng) < accept)) return false;
  while (!buf.fits(item)) {
    const int victim_class = detail::most_frequent_class(buf.class_counts(), rng);
    buf.erase(detail::random_index_of_class(buf, victim_class, rng));
  }
  buf.push(std::move(item));
  return true;
}

// Classic reservoir sampling; seen_count counts every offered item including
// this one. When full, the item is kept with probability size/seen_count and
// replaces uniformly random residents until it fits.
template <class Item>
bool vanilla_reservoir_insert(MemoryBuffer<Item>& buf, Item item, std::size_t seen_count, Rng& rng) {
  if (buf.cost(item) > buf.capacity())
    throw Error(ErrorKind::oversize, "item exceeds buffer capacity " + std::to_string(buf.capacity()));
  if (buf.fits(item)) {
    buf.push(std::move(item));
    return true;
  }
  if (seen_count == 0) throw Error(ErrorKind::invalid_input, "seen_count must count the offered item");
  const std::size_t j = std::uniform_int_distribution<std::size_t>(0, seen_count - 1)(rng);
  if (j >= buf.size()) return false;
  buf.erase(j);
  while (!buf.fits(item)) buf.erase(std::uniform_int_distribution<std::size_t>(0, buf.size() - 1)(rng));
  buf.push(std::move(item));
  return true;
}

// Uniform draw without replacement, or with replacement when batch_size
// exceeds the buffer. nullopt signals an empty buffer (replay is skipped).
template <class Item>
std::optional<std::vector<Item>> sample_replay_batch(const MemoryBuffer<Item>& buf, std::size_t batch_size, Rng& rng) {
  if (buf.empty()) return std::nullopt;
  std::vector<Item> out;
  out.reserve(batch_size);
  const std::size_t n = buf.size();
  if (batch_size > n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(buf.items()[pick(rng)]);
    return out;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, n - 1)(rng)]);
    out.push_back(buf.items()[idx[i]]);
  }
  return out;
}

// max/min over classes present in the histogram; 0 when it is empty.
inline double imbalance_ratio(const ClassHistogram& h, std::span<const int> classes = {}) {
  std::vector<std::size_t> counts;
  if (classes.empty()) {
    for (const auto& [c, n] : h) counts.push_back(n);
  } else {
    for (int c : classes) {
      const auto it = h.find(c);
      counts.push_back(it == h.end() ? 0 : it->second);
    }
  }
  if (counts.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

}  // namespace cuter
