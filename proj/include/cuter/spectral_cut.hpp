#pragma once

// Normalized-cut bipartitioning (spectral relaxation and exhaustive oracle)
// and iterative MaskCut over patch feature maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/linalg.hpp"
#include "cuter/patchgraph.hpp"

namespace cuter {

struct Bipartition {
  std::vector<std::uint8_t> side_of;  // 0 or 1 per node
  std::uint8_t foreground = 1;
  double energy = 0.0;

  std::size_t count(std::uint8_t side) const {
    return static_cast<std::size_t>(std::count(side_of.begin(), side_of.end(), side));
  }
};

// Same split, ignoring which label each side carries.
inline bool same_partition(const Bipartition& a, const Bipartition& b) {
  if (a.side_of.size() != b.side_of.size()) return false;
  bool equal = true, complement = true;
  for (std::size_t i = 0; i < a.side_of.size(); ++i) {
    equal = equal && a.side_of[i] == b.side_of[i];
    complement = complement && a.side_of[i] != b.side_of[i];
  }
  return equal || complement;
}

// Inclusive patch coordinates.
struct Box {
  int h1 = 0, w1 = 0, h2 = 0, w2 = 0;

  int height() const noexcept { return h2 - h1 + 1; }
  int width() const noexcept { return w2 - w1 + 1; }
  int area() const noexcept { return height() * width(); }
  bool contains(int r, int c) const noexcept { return r >= h1 && r <= h2 && c >= w1 && c <= w2; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct GridMask {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::uint8_t> cells;

  GridMask() = default;
  GridMask(std::size_t h, std::size_t w) : grid_h(h), grid_w(w), cells(h * w, 0) {}

  bool at(std::size_t r, std::size_t c) const noexcept { return cells[r * grid_w + c] != 0; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](auto v) { return v != 0; }));
  }

  friend bool operator==(const GridMask&, const GridMask&) = default;
};

inline Box mask_to_bbox(const GridMask& mask) {
  int h1 = std::numeric_limits<int>::max(), w1 = h1, h2 = -1, w2 = -1;
  for (std::size_t r = 0; r < mask.grid_h; ++r)
    for (std::size_t c = 0; c < mask.grid_w; ++c)
      if (mask.at(r, c)) {
        h1 = std::min(h1, static_cast<int>(r));
        h2 = std::max(h2, static_cast<int>(r));
        w1 = std::min(w1, static_cast<int>(c));
        w2 = std::max(w2, static_cast<int>(c));
      }
  if (h2 < 0) throw Error(ErrorKind::empty_mask, "mask has no true cell");
  return {h1, w1, h2, w2};
}

// E(A,B) = C(A,B)/C(A,V) + C(A,B)/C(B,V)
inline double ncut_energy(const PatchGraph& g, const Bipartition& p) {
  const std::size_t n = g.size();
  if (p.side_of.size() != n) throw Error(ErrorKind::invalid_input, "partition size mismatch");
  double cut = 0.0, vol0 = 0.0, vol1 = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool in1 = p.side_of[i] != 0;
    n1 += in1;
    (in1 ? vol1 : vol0) += g.degrees()[i];
    if (!in1) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (p.side_of[j] == 0) cut += g.weight(i, j);
  }
  if (n1 == 0 || n1 == n) throw Error(ErrorKind::degenerate_partition, "a side of the partition is empty");
  if (!(vol0 > 0.0) || !(vol1 > 0.0))
    throw Error(ErrorKind::degenerate_partition, "a side of the partition has zero volume");
  return cut / vol0 + cut / vol1;
}

// Generalized Fiedler embedding u = D^{-1/2} z, z the second eigenvector of
// L_sym, together with lambda_2(L_sym).
struct SpectralEmbedding {
  std::vector<double> u;
  double lambda2 = 0.0;
};

inline SpectralEmbedding fiedler_embedding(const PatchGraph& g) {
  if (g.size() < 2) throw Error(ErrorKind::invalid_input, "bipartition needs at least 2 nodes");
  const auto ed = sym_eigendecomposition(normalized_laplacian(g));
  SpectralEmbedding e;
  e.lambda2 = ed.values[1];
  e.u.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) e.u[i] = ed.vectors(i, 1) / std::sqrt(g.degrees()[i]);
  return e;
}

inline constexpr double kConnectedEigenTol = 1e-10;

// Spectral NCut: threshold u at its mean (median when that empties a side).
// The foreground is the side holding the node of largest |u|.
inline Bipartition ncut_bipartition(const PatchGraph& g) {
  const std::size_t n = g.size();
  const auto emb = fiedler_embedding(g);
  if (!(emb.lambda2 > kConnectedEigenTol))
    throw Error(ErrorKind::ambiguous_cut, "graph is disconnected; split components first");

  Bipartition p;
  p.side_of.assign(n, 0);
  const double mean = std::accumulate(emb.u.begin(), emb.u.end(), 0.0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) p.side_of[i] = emb.u[i] > mean ? 1 : 0;
  if (p.count(1) == 0 || p.count(1) == n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return emb.u[a] < emb.u[b]; });
    for (std::size_t r = 0; r < n; ++r) p.side_of[order[r]] = r >= n / 2 ? 1 : 0;
  }
  std::size_t seed = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(emb.u[i]) > std::abs(emb.u[seed])) seed = i;
  p.foreground = p.side_of[seed];
  p.energy = ncut_energy(g, p);
  return p;
}

// Exact NCut minimizer by enumeration. Candidates are visited in
// lexicographic order of side_of, so the first minimum wins ties; energies
// within a relative 1e-12 count as tied. Splits with a zero-volume side are
// skipped. The smaller-volume side is reported as foreground.
inline Bipartition brute_force_ncut(const PatchGraph& g) {
  const std::size_t n = g.size();
  if (n < 2) throw Error(ErrorKind::invalid_input, "bipartition needs at least 2 nodes");
  if (n > kMaxBruteForceNodes)
    throw Error(ErrorKind::size_limit, "brute-force NCut limited to n <= 14, got " + std::to_string(n));

  Bipartition best;
  double best_energy = std::numeric_limits<double>::infinity();
  Bipartition cand;
  cand.side_of.assign(n, 0);
  const std::uint32_t total = 1u << n;
  for (std::uint32_t m = 1; m + 1 < total; ++m) {
    // side_of[0] is the most significant bit, making numeric order lexicographic.
    for (std::size_t i = 0; i < n; ++i) cand.side_of[i] = (m >> (n - 1 - i)) & 1u;
    double vol0 = 0.0, vol1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) (cand.side_of[i] ? vol1 : vol0) += g.degrees()[i];
    if (!(vol0 > 0.0) || !(vol1 > 0.0)) continue;
    const double e = ncut_energy(g, cand);
    if (best.side_of.empty() || e < best_energy - 1e-12 * std::max(1.0, best_energy)) {
      best_energy = e;
      best = cand;
    }
  }
  if (best.side_of.empty())
    throw Error(ErrorKind::degenerate_partition, "no split with positive volume on both sides");
  best.energy = best_energy;
  double vol1 = 0.0, vol0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) (best.side_of[i] ? vol1 : vol0) += g.degrees()[i];
  best.foreground = vol1 <= vol0 ? 1 : 0;
  return best;
}

enum class EarlyStop { none, too_few_nodes, disconnected, empty_mask };

inline std::string to_string(EarlyStop s) {
  switch (s) {
    case EarlyStop::none: return "none";
    case EarlyStop::too_few_nodes: return "too_few_nodes";
    case EarlyStop::disconnected: return "disconnected";
    case EarlyStop::empty_mask: return "empty_mask";
  }
  return "none";
}

struct CutIteration {
  GridMask mask;
  Box bbox;
  double energy = 0.0;
  double fiedler = 0.0;  // lambda_2 of L_sym for this round's graph

  friend bool operator==(const CutIteration&, const CutIteration&) = default;
};

struct CutResult {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<CutIteration> iterations;
  EarlyStop early_stop = EarlyStop::none;

  friend bool operator==(const CutResult&, const CutResult&) = default;
};

inline constexpr std::size_t kDefaultMaskCutIterations = 3;

// Similarity over all patches where any pair touching a masked patch (and,
// for cosine kernels, any zero-norm patch) gets epsilon_floor. Gaussian
// bandwidth is resolved over the unmasked patches only.
inline PatchGraph masked_adjacency(const FeatureMap& fm, const KernelSpec& k,
                                   const std::vector<std::uint8_t>& masked) {
  const std::size_t n = fm.patches();
  std::vector<std::uint8_t> live(n);
  for (std::size_t i = 0; i < n; ++i) live[i] = masked[i] ? 0 : 1;
  SymMatrix a(n);
  if (k.kind == KernelKind::gaussian) {
    const double sigma = resolve_sigma(fm, k, live);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        a.set(i, j, live[i] && live[j] ? gaussian_weight(squared_distance(fm.patch(i), fm.patch(j)), sigma)
                                       : k.epsilon_floor);
  } else {
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = live[i] ? norm2(fm.patch(i)) : 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (norms[i] == 0.0 || norms[j] == 0.0) {
          a.set(i, j, k.epsilon_floor);
          continue;
        }
        const double w = cosine_weight(dot(fm.patch(i), fm.patch(j)) / (norms[i] * norms[j]), k);
        a.set(i, j, w);
      }
  }
  return PatchGraph(std::move(a));
}

// Iterative NCut with masking. Each round cuts the masked similarity graph,
// thresholds the Fiedler embedding at its mean over unmasked patches, picks
// the foreground side (largest |u|, flipped if it holds >= 3 grid corners)
// and records the connected foreground component around the strongest
// foreground patch as that round's mask.
inline CutResult maskcut(const FeatureMap& fm, const KernelSpec& k,
                         std::size_t n_iters = kDefaultMaskCutIterations) {
  if (n_iters < 1) throw Error(ErrorKind::invalid_input, "maskcut needs at least one iteration");
  fm.validate();
  k.validate();
  const std::size_t n = fm.patches();
  CutResult result;
  result.grid_h = fm.grid_h;
  result.grid_w = fm.grid_w;
  std::vector<std::uint8_t> masked(n, 0);

  const std::array<std::size_t, 4> corners{0, fm.grid_w - 1, (fm.grid_h - 1) * fm.grid_w, n - 1};

  for (std::size_t t = 0; t < n_iters; ++t) {
    const std::size_t remaining = static_cast<std::size_t>(std::count(masked.begin(), masked.end(), 0));
    if (remaining < 4) {
      result.early_stop = EarlyStop::too_few_nodes;
      break;
    }
    const PatchGraph g = masked_adjacency(fm, k, masked);
    if (!is_connected(g)) {
      result.early_stop = EarlyStop::disconnected;
      break;
    }
    const auto emb = fiedler_embedding(g);
    if (!(emb.lambda2 > kConnectedEigenTol)) {
      result.early_stop = EarlyStop::disconnected;
      break;
    }

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!masked[i]) mean += emb.u[i];
    mean /= static_cast<double>(remaining);

    std::size_t seed = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!masked[i] && (seed == n || std::abs(emb.u[i]) > std::abs(emb.u[seed]))) seed = i;
    bool fg_high = emb.u[seed] > mean;
    int corner_hits = 0;
    for (std::size_t c : corners)
      if (!masked[c] && (emb.u[c] > mean) == fg_high) ++corner_hits;
    if (corner_hits >= 3) fg_high = !fg_high;

    // Keep the 4-connected foreground component around the strongest
    // foreground patch; the rest of that side stays available to later rounds.
    auto on_fg = [&](std::size_t i) { return !masked[i] && (emb.u[i] > mean) == fg_high; };
    std::size_t anchor = n;
    for (std::size_t i = 0; i < n; ++i)
      if (on_fg(i) && (anchor == n || std::abs(emb.u[i] - mean) > std::abs(emb.u[anchor] - mean))) anchor = i;

    CutIteration it;
    it.mask = GridMask(fm.grid_h, fm.grid_w);
    Bipartition split;
    split.side_of.assign(n, 0);
    if (anchor != n) {
      std::vector<std::size_t> frontier{anchor};
      it.mask.cells[anchor] = 1;
      while (!frontier.empty()) {
        const std::size_t cur = frontier.back();
        frontier.pop_back();
        const std::size_t r = cur / fm.grid_w, c = cur % fm.grid_w;
        auto visit = [&](std::size_t nb) {
          if (!it.mask.cells[nb] && on_fg(nb)) {
            it.mask.cells[nb] = 1;
            frontier.push_back(nb);
          }
        };
        if (r > 0) visit(cur - fm.grid_w);
        if (r + 1 < fm.grid_h) visit(cur + fm.grid_w);
        if (c > 0) visit(cur - 1);
        if (c + 1 < fm.grid_w) visit(cur + 1);
      }
    }
    for (std::size_t i = 0; i < n; ++i) split.side_of[i] = it.mask.cells[i];
    if (it.mask.count() == 0 || it.mask.count() == n) {
      result.early_stop = EarlyStop::empty_mask;
      break;
    }
    it.energy = ncut_energy(g, split);
    it.fiedler = std::max(0.0, emb.lambda2);
    it.bbox = mask_to_bbox(it.mask);
    for (std::size_t i = 0; i < n; ++i) masked[i] = masked[i] || it.mask.cells[i];
    result.iterations.push_back(std::move(it));
  }
  return result;
}

}  // namespace cuter
