#pragma once

// Weighted patch graphs built from feature maps, their Laplacians, Fiedler
// values and an exhaustive Cheeger-constant oracle for small graphs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cuter/error.hpp"
#include "cuter/linalg.hpp"

namespace cuter {

// grid_h x grid_w patches, each a vector of `dim` reals, row-major patch order.
struct FeatureMap {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t d, double fill = 0.0)
      : grid_h(h), grid_w(w), dim(d), values(h * w * d, fill) {}

  std::size_t patches() const noexcept { return grid_h * grid_w; }
  std::size_t index(std::size_t r, std::size_t c) const noexcept { return r * grid_w + c; }

  std::span<const double> patch(std::size_t i) const noexcept {
    return {values.data() + i * dim, dim};
  }
  std::span<double> patch(std::size_t i) noexcept { return {values.data() + i * dim, dim}; }

  void validate() const {
    if (patches() < 2) throw Error(ErrorKind::invalid_input, "feature map needs at least 2 patches");
    if (dim == 0) throw Error(ErrorKind::invalid_input, "feature dimension must be positive");
    if (values.size() != patches() * dim)
      throw Error(ErrorKind::invalid_input, "feature payload does not match grid shape");
    for (double x : values)
      if (!std::isfinite(x)) throw Error(ErrorKind::invalid_input, "non-finite feature entry");
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// Raw inputs share the layout of feature maps.
using PatchGrid = FeatureMap;

enum class KernelKind { gaussian, cosine_continuous, cosine_binarized };

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  std::optional<double> sigma;  // empty: median pairwise distance per map
  double tau_sim = 0.2;
  double epsilon_floor = 1e-5;

  void validate() const {
    if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma)))
      throw Error(ErrorKind::invalid_input, "kernel sigma must be positive");
    if (!(tau_sim > 0.0 && tau_sim < 1.0))
      throw Error(ErrorKind::invalid_input, "tau_sim must lie in (0,1)");
    if (!(epsilon_floor > 0.0 && epsilon_floor < tau_sim))
      throw Error(ErrorKind::invalid_input, "epsilon_floor must lie in (0, tau_sim)");
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::cosine_continuous: return "cosine-continuous";
    case KernelKind::cosine_binarized: return "cosine-binarized";
  }
  return "gaussian";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "gaussian") return KernelKind::gaussian;
  if (s == "cosine-continuous" || s == "cosine") return KernelKind::cosine_continuous;
  if (s == "cosine-binarized") return KernelKind::cosine_binarized;
  throw Error(ErrorKind::invalid_input, "unknown kernel kind '" + s + "'");
}

// Symmetric nonnegative adjacency with zero diagonal plus cached degrees.
class PatchGraph {
 public:
  explicit PatchGraph(SymMatrix adjacency) : a_(std::move(adjacency)), degrees_(a_.size(), 0.0) {
    const std::size_t n = a_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (a_(i, i) != 0.0) throw Error(ErrorKind::invalid_input, "adjacency diagonal must be zero");
      double d = 0.0;
      for (double w : a_.row(i)) {
        if (!(w >= 0.0) || !std::isfinite(w))
          throw Error(ErrorKind::invalid_input, "adjacency weights must be finite and nonnegative");
        d += w;
      }
      degrees_[i] = d;
    }
  }

  std::size_t size() const noexcept { return a_.size(); }
  const SymMatrix& adjacency() const noexcept { return a_; }
  double weight(std::size_t i, std::size_t j) const noexcept { return a_(i, j); }
  const std::vector<double>& degrees() const noexcept { return degrees_; }

 private:
  SymMatrix a_;
  std::vector<double> degrees_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Median of pairwise Euclidean distances over patches with include[i] set
// (all patches when include is empty).
inline double median_pairwise_distance(const FeatureMap& fm, std::span<const std::uint8_t> include = {}) {
  std::vector<double> d;
  const std::size_t n = fm.patches();
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (!include.empty() && !include[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!include.empty() && !include[j]) continue;
      d.push_back(std::sqrt(squared_distance(fm.patch(i), fm.patch(j))));
    }
  }
  return detail::median_of(std::move(d));
}

// Bandwidth for the Gaussian kernel. With the median heuristic, a zero median
// (at least half the pairs coincide) falls back to the mean nonzero distance,
// and to 1 when every patch is identical.
inline double resolve_sigma(const FeatureMap& fm, const KernelSpec& k,
                            std::span<const std::uint8_t> include = {}) {
  if (k.sigma) return *k.sigma;
  const double med = median_pairwise_distance(fm, include);
  if (med > 0.0) return med;
  double sum = 0.0;
  std::size_t cnt = 0;
  const std::size_t n = fm.patches();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!include.empty() && (!include[i] || !include[j])) continue;
      const double d = std::sqrt(squared_distance(fm.patch(i), fm.patch(j)));
      if (d > 0.0) {
        sum += d;
        ++cnt;
      }
    }
  return cnt ? sum / static_cast<double>(cnt) : 1.0;
}

inline double gaussian_weight(double sq_dist, double sigma) {
  return std::exp(-sq_dist / (2.0 * sigma * sigma));
}

inline double cosine_weight(double cosine, const KernelSpec& k) {
  if (k.kind == KernelKind::cosine_binarized) return cosine >= k.tau_sim ? 1.0 : k.epsilon_floor;
  return std::max(cosine, 0.0);
}

inline PatchGraph build_adjacency(const FeatureMap& fm, const KernelSpec& k) {
  fm.validate();
  k.validate();
  const std::size_t n = fm.patches();
  SymMatrix a(n);
  if (k.kind == KernelKind::gaussian) {
    const double sigma = resolve_sigma(fm, k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        a.set(i, j, gaussian_weight(squared_distance(fm.patch(i), fm.patch(j)), sigma));
  } else {
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
      norms[i] = norm2(fm.patch(i));
      if (norms[i] == 0.0)
        throw Error(ErrorKind::degenerate_feature,
                    "patch " + std::to_string(i) + " has zero norm under a cosine kernel");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        a.set(i, j, cosine_weight(dot(fm.patch(i), fm.patch(j)) / (norms[i] * norms[j]), k));
  }
  return PatchGraph(std::move(a));
}

// L = D - A
inline SymMatrix laplacian(const PatchGraph& g) {
  const std::size_t n = g.size();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) l(i, j) = (i == j ? g.degrees()[i] : 0.0) - g.weight(i, j);
  return SymMatrix::from(std::move(l));
}

// L_sym = I - D^{-1/2} A D^{-1/2}
inline SymMatrix normalized_laplacian(const PatchGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(g.degrees()[i] > 0.0))
      throw Error(ErrorKind::isolated_node, "node " + std::to_string(i) + " has zero degree");
    inv_sqrt[i] = 1.0 / std::sqrt(g.degrees()[i]);
  }
  SymMatrix l(n);
  for (std::size_t i = 0; i < n; ++i) {
    l.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) l.set(i, j, -g.weight(i, j) * inv_sqrt[i] * inv_sqrt[j]);
  }
  return l;
}

enum class LaplacianKind { unnormalized, normalized };

inline std::string to_string(LaplacianKind k) {
  return k == LaplacianKind::normalized ? "normalized" : "unnormalized";
}

// Second smallest eigenvalue, clamped at zero against roundoff.
inline double fiedler_value(const PatchGraph& g, LaplacianKind which = LaplacianKind::unnormalized) {
  if (g.size() < 2) throw Error(ErrorKind::invalid_input, "Fiedler value needs at least 2 nodes");
  const SymMatrix l = which == LaplacianKind::normalized ? normalized_laplacian(g) : laplacian(g);
  return std::max(0.0, sym_eigenvalues(l)[1]);
}

inline double max_degree(const PatchGraph& g) {
  return *std::max_element(g.degrees().begin(), g.degrees().end());
}

// Connectivity of the support {A_ij > 0}.
inline bool is_connected(const PatchGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (g.weight(i, j) > 0.0) {
        const std::size_t a = find(i), b = find(j);
        if (a != b) {
          parent[a] = b;
          --components;
        }
      }
  return components == 1;
}

// How the cut weight is normalized in the Cheeger ratio.
//   volume:      C(S,V^S) / min(C(S,V), C(V^S,V))  (conductance)
//   cardinality: C(S,V^S) / min(|S|, |V^S|)        (edge expansion)
enum class CheegerNormalization { volume, cardinality };

inline constexpr std::size_t kMaxBruteForceNodes = 14;

// Exhaustive minimum over nonempty proper subsets. A ratio with zero cut is
// zero even when its denominator vanishes.
inline double cheeger_constant_bruteforce(const PatchGraph& g,
                                          CheegerNormalization norm = CheegerNormalization::volume) {
  const std::size_t n = g.size();
  if (n < 2) throw Error(ErrorKind::invalid_input, "Cheeger constant needs at least 2 nodes");
  if (n > kMaxBruteForceNodes)
    throw Error(ErrorKind::size_limit, "brute-force Cheeger limited to n <= 14, got " + std::to_string(n));
  const double total = std::accumulate(g.degrees().begin(), g.degrees().end(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  // Fix node n-1 outside S: every bipartition is visited once.
  const std::uint32_t limit = 1u << (n - 1);
  for (std::uint32_t s = 1; s < limit; ++s) {
    double cut = 0.0, vol = 0.0;
    std::size_t size = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!((s >> i) & 1u)) continue;
      ++size;
      vol += g.degrees()[i];
      for (std::size_t j = 0; j < n; ++j)
        if (!((s >> j) & 1u)) cut += g.weight(i, j);
    }
    double denom = norm == CheegerNormalization::volume
                       ? std::min(vol, total - vol)
                       : static_cast<double>(std::min(size, n - size));
    const double ratio = cut == 0.0 ? 0.0 : cut / denom;
    best = std::min(best, ratio);
  }
  return best;
}

}  // namespace cuter
