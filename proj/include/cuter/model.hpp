#pragma once

// Toy per-patch encoder with a pooled multi-label head, the asymmetric loss,
// feature-graph regularizers and their analytic gradients, and SGD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
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

struct ModelParams {
  Matrix encoder_weight;             // dim_in x dim_feat
  std::vector<double> encoder_bias;  // dim_feat
  Matrix head_weight;                // dim_feat x n_classes_max
  std::vector<double> head_bias;     // n_classes_max
  std::size_t active_classes = 0;

  std::size_t dim_in() const noexcept { return encoder_weight.rows(); }
  std::size_t dim_feat() const noexcept { return encoder_weight.cols(); }
  std::size_t n_classes_max() const noexcept { return head_weight.cols(); }

  static ModelParams zeros(std::size_t dim_in, std::size_t dim_feat, std::size_t n_classes_max,
                           std::size_t active_classes) {
    ModelParams p;
    p.encoder_weight = Matrix(dim_in, dim_feat);
    p.encoder_bias.assign(dim_feat, 0.0);
    p.head_weight = Matrix(dim_feat, n_classes_max);
    p.head_bias.assign(n_classes_max, 0.0);
    p.active_classes = active_classes;
    p.validate();
    return p;
  }

  // Zero tensors of the same shape, for gradients and optimizer state.
  ModelParams zeros_like() const {
    return zeros(dim_in(), dim_feat(), n_classes_max(), active_classes);
  }

  void validate() const {
    if (dim_in() == 0 || dim_feat() == 0 || n_classes_max() == 0)
      throw Error(ErrorKind::invalid_input, "model dimensions must be positive");
    if (encoder_bias.size() != dim_feat() || head_weight.rows() != dim_feat() ||
        head_bias.size() != n_classes_max())
      throw Error(ErrorKind::invalid_input, "model parameter shapes are inconsistent");
    if (active_classes > n_classes_max())
      throw Error(ErrorKind::invalid_input, "active_classes exceeds n_classes_max");
    for (const auto* block : {&encoder_weight.data(), &encoder_bias, &head_weight.data(), &head_bias})
      for (double x : *block)
        if (!std::isfinite(x)) throw Error(ErrorKind::invalid_input, "non-finite model parameter");
  }

  template <class F>
  void for_each_block(F&& f) {
    f(encoder_weight.data());
    f(encoder_bias);
    f(head_weight.data());
    f(head_bias);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f(encoder_weight.data());
    f(encoder_bias);
    f(head_weight.data());
    f(head_bias);
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// dst += scale * src, block by block.
inline void add_scaled(ModelParams& dst, const ModelParams& src, double scale) {
  std::vector<const std::vector<double>*> from;
  src.for_each_block([&](const std::vector<double>& b) { from.push_back(&b); });
  std::size_t k = 0;
  dst.for_each_block([&](std::vector<double>& b) {
    const auto& s = *from[k++];
    if (s.size() != b.size()) throw Error(ErrorKind::invalid_input, "parameter shape mismatch");
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * s[i];
  });
}

// Encoder weights ~ N(0, gain^2/dim_in), head weights ~ N(0, head_scale^2),
// zero biases.
inline ModelParams init_params(std::size_t dim_in, std::size_t dim_feat, std::size_t n_classes_max,
                               std::size_t active_classes, Rng& rng, double head_scale = 0.01,
                               double encoder_gain = 1.0) {
  ModelParams p = ModelParams::zeros(dim_in, dim_feat, n_classes_max, active_classes);
  std::normal_distribution<double> enc(0.0, encoder_gain / std::sqrt(static_cast<double>(dim_in)));
  std::normal_distribution<double> head(0.0, head_scale);
  for (double& w : p.encoder_weight.data()) w = enc(rng);
  for (double& w : p.head_weight.data()) w = head(rng);
  return p;
}

// Per patch: tanh(W_e^T x + b_e).
inline FeatureMap encode(const ModelParams& p, const PatchGrid& raw) {
  if (raw.dim != p.dim_in())
    throw Error(ErrorKind::invalid_input, "input dimension " + std::to_string(raw.dim) +
                                              " does not match encoder input " + std::to_string(p.dim_in()));
  const std::size_t f = p.dim_feat();
  FeatureMap out(raw.grid_h, raw.grid_w, f);
  for (std::size_t i = 0; i < raw.patches(); ++i) {
    const auto x = raw.patch(i);
    auto y = out.patch(i);
    for (std::size_t k = 0; k < f; ++k) y[k] = p.encoder_bias[k];
    for (std::size_t d = 0; d < raw.dim; ++d) {
      const double xd = x[d];
      if (xd == 0.0) continue;
      const auto wrow = p.encoder_weight.row(d);
      for (std::size_t k = 0; k < f; ++k) y[k] += xd * wrow[k];
    }
    for (std::size_t k = 0; k < f; ++k) y[k] = std::tanh(y[k]);
  }
  return out;
}

// Copies the patches inside `box` into a new grid.
inline PatchGrid crop(const PatchGrid& g, const Box& box) {
  if (box.h1 < 0 || box.w1 < 0 || box.h2 >= static_cast<int>(g.grid_h) || box.w2 >= static_cast<int>(g.grid_w))
    throw Error(ErrorKind::invalid_input, "crop box outside the grid");
  if (box.h2 < box.h1 || box.w2 < box.w1) throw Error(ErrorKind::empty_region, "crop box is empty");
  PatchGrid out(static_cast<std::size_t>(box.height()), static_cast<std::size_t>(box.width()), g.dim);
  for (int r = box.h1; r <= box.h2; ++r)
    for (int c = box.w1; c <= box.w2; ++c) {
      const auto src = g.patch(g.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
      auto dst = out.patch(out.index(static_cast<std::size_t>(r - box.h1), static_cast<std::size_t>(c - box.w1)));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  return out;
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

namespace detail {

inline std::vector<double> mean_pool(const FeatureMap& fm, const std::optional<Box>& region) {
  Box b = region.value_or(Box{0, 0, static_cast<int>(fm.grid_h) - 1, static_cast<int>(fm.grid_w) - 1});
  if (b.h2 < b.h1 || b.w2 < b.w1) throw Error(ErrorKind::empty_region, "prediction region is empty");
  if (b.h1 < 0 || b.w1 < 0 || b.h2 >= static_cast<int>(fm.grid_h) || b.w2 >= static_cast<int>(fm.grid_w))
    throw Error(ErrorKind::invalid_input, "prediction region outside the grid");
  std::vector<double> pool(fm.dim, 0.0);
  for (int r = b.h1; r <= b.h2; ++r)
    for (int c = b.w1; c <= b.w2; ++c) {
      const auto f = fm.patch(fm.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
      for (std::size_t k = 0; k < fm.dim; ++k) pool[k] += f[k];
    }
  const double inv = 1.0 / static_cast<double>(b.area());
  for (double& x : pool) x *= inv;
  return pool;
}

inline std::vector<double> logits(const ModelParams& p, const std::vector<double>& pool) {
  std::vector<double> z(p.active_classes);
  for (std::size_t c = 0; c < p.active_classes; ++c) {
    double s = p.head_bias[c];
    for (std::size_t k = 0; k < pool.size(); ++k) s += p.head_weight(k, c) * pool[k];
    z[c] = s;
  }
  return z;
}

}  // namespace detail

// Sigmoid probabilities over the active classes from features mean-pooled
// over `region` (the whole grid when absent).
inline std::vector<double> predict(const ModelParams& p, const FeatureMap& fm,
                                   const std::optional<Box>& region = std::nullopt) {
  if (fm.dim != p.dim_feat()) throw Error(ErrorKind::invalid_input, "feature dimension mismatch");
  auto z = detail::logits(p, detail::mean_pool(fm, region));
  for (double& v : z) v = sigmoid(v);
  return z;
}

struct AsymLossParams {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;

  void validate() const {
    if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0))
      throw Error(ErrorKind::invalid_input, "focusing parameters must be nonnegative");
  }
  friend bool operator==(const AsymLossParams&, const AsymLossParams&) = default;
};

inline constexpr double kProbClamp = 1e-7;

struct AslValue {
  double value = 0.0;
  bool flagged = false;  // no observed class; value is 0 by convention
};

// -(1/|C|) sum over observed c of y_c (1-p_c)^g+ log p_c + (1-y_c) p_c^g- log(1-p_c)
inline AslValue asl_loss(const std::vector<double>& p, const std::vector<double>& y, const AsymLossParams& lp,
                         const std::vector<std::uint8_t>& observed) {
  if (p.size() != y.size() || p.size() != observed.size())
    throw Error(ErrorKind::invalid_input, "probability, label and mask lengths differ");
  double sum = 0.0;
  std::size_t n_obs = 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!observed[c]) continue;
    ++n_obs;
    const double pc = std::clamp(p[c], kProbClamp, 1.0 - kProbClamp);
    sum += y[c] > 0.5 ? std::pow(1.0 - pc, lp.gamma_pos) * std::log(pc)
                      : std::pow(pc, lp.gamma_neg) * std::log(1.0 - pc);
  }
  if (n_obs == 0) return {0.0, true};
  return {-sum / static_cast<double>(n_obs), false};
}

// d asl_loss / d logit, with p = sigmoid(logit). Zero where the clamp is active.
inline std::vector<double> asl_logit_gradient(const std::vector<double>& p, const std::vector<double>& y,
                                              const AsymLossParams& lp, const std::vector<std::uint8_t>& observed) {
  std::vector<double> g(p.size(), 0.0);
  const auto n_obs = static_cast<std::size_t>(std::count_if(observed.begin(), observed.end(), [](auto m) { return m != 0; }));
  if (n_obs == 0) return g;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!observed[c]) continue;
    const double pc = p[c];
    if (pc < kProbClamp || pc > 1.0 - kProbClamp) continue;
    double dp;
    if (y[c] > 0.5) {
      const double g_pos = lp.gamma_pos;
      dp = -std::pow(1.0 - pc, g_pos) / pc;
      if (g_pos > 0.0) dp += g_pos * std::pow(1.0 - pc, g_pos - 1.0) * std::log(pc);
    } else {
      const double g_neg = lp.gamma_neg;
      dp = std::pow(pc, g_neg) / (1.0 - pc);
      if (g_neg > 0.0) dp -= g_neg * std::pow(pc, g_neg - 1.0) * std::log(1.0 - pc);
    }
    g[c] = dp * pc * (1.0 - pc) / static_cast<double>(n_obs);
  }
  return g;
}

enum class RegularizerKind { none, low_rank, sparse, smooth };

inline std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::low_rank: return "low_rank";
    case RegularizerKind::sparse: return "sparse";
    case RegularizerKind::smooth: return "smooth";
  }
  return "none";
}

inline RegularizerKind regularizer_kind_from_string(const std::string& s) {
  if (s == "none") return RegularizerKind::none;
  if (s == "low_rank") return RegularizerKind::low_rank;
  if (s == "sparse") return RegularizerKind::sparse;
  if (s == "smooth") return RegularizerKind::smooth;
  throw Error(ErrorKind::invalid_input, "unknown regularizer kind '" + s + "'");
}

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::low_rank;
  double alpha = 0.1;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::invalid_input, "alpha must be >= 0");
  }
  bool active() const noexcept { return kind != RegularizerKind::none && alpha > 0.0; }
  friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;
};

// Unscaled regularizer value; alpha is applied by the caller.
//   low_rank: nuclear norm of A
//   sparse:   l1 / l2 of A flattened
//   smooth:   1/2 sum_ij A_ij |f_i - f_j|^2
inline double regularizer_value(const SymMatrix& a, const FeatureMap& fm, const RegularizerSpec& spec) {
  switch (spec.kind) {
    case RegularizerKind::none: return 0.0;
    case RegularizerKind::low_rank: return nuclear_norm(a);
    case RegularizerKind::sparse: {
      double l1 = 0.0, l2 = 0.0;
      for (double x : a.matrix().data()) {
        l1 += std::abs(x);
        l2 += x * x;
      }
      if (l2 == 0.0) throw Error(ErrorKind::zero_division, "sparse regularizer of an all-zero adjacency");
      return l1 / std::sqrt(l2);
    }
    case RegularizerKind::smooth: {
      if (fm.patches() != a.size()) throw Error(ErrorKind::invalid_input, "adjacency and feature map sizes differ");
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
          if (i != j) s += a(i, j) * squared_distance(fm.patch(i), fm.patch(j));
      return 0.5 * s;
    }
  }
  return 0.0;
}

// dR/dA treating the n^2 entries as independent.
inline SymMatrix regularizer_adjacency_gradient(const SymMatrix& a, const FeatureMap& fm,
                                                const RegularizerSpec& spec) {
  const std::size_t n = a.size();
  switch (spec.kind) {
    case RegularizerKind::none: return SymMatrix(n);
    case RegularizerKind::low_rank: return nuclear_norm_subgradient(a);
    case RegularizerKind::sparse: {
      double l1 = 0.0, l2sq = 0.0;
      for (double x : a.matrix().data()) {
        l1 += std::abs(x);
        l2sq += x * x;
      }
      if (l2sq == 0.0) throw Error(ErrorKind::zero_division, "sparse regularizer of an all-zero adjacency");
      const double l2 = std::sqrt(l2sq);
      SymMatrix g(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
          const double x = a(i, j);
          const double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
          g.set(i, j, sgn / l2 - l1 * x / (l2sq * l2));
        }
      return g;
    }
    case RegularizerKind::smooth: {
      SymMatrix g(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) g.set(i, j, 0.5 * squared_distance(fm.patch(i), fm.patch(j)));
      return g;
    }
  }
  return SymMatrix(n);
}

struct TrainExample {
  PatchGrid raw;
  std::vector<double> targets;         // over active classes, 0 or 1
  std::vector<std::uint8_t> observed;  // over active classes
  bool regularize = true;
};

struct LossAndGradients {
  double loss = 0.0;
  double asl = 0.0;          // batch mean of the classification part
  double regularizer = 0.0;  // batch mean of alpha * R(A) over regularized examples
  std::size_t flagged = 0;   // examples with no observed class
  ModelParams grads;
};

namespace detail {

// Accumulates d(alpha * R(A(F)))/dF into dfeat for one Gaussian-kernel map;
// returns alpha * R. The bandwidth is resolved from F and held constant.
inline double regularizer_feature_gradient(const FeatureMap& feats, const KernelSpec& k, const RegularizerSpec& spec,
                                           std::vector<double>& dfeat) {
  const std::size_t n = feats.patches(), f = feats.dim;
  const double sigma = resolve_sigma(feats, k);
  SymMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      a.set(i, j, gaussian_weight(squared_distance(feats.patch(i), feats.patch(j)), sigma));
  const double value = spec.alpha * regularizer_value(a, feats, spec);
  const SymMatrix g = regularizer_adjacency_gradient(a, feats, spec);
  const double inv_s2 = 1.0 / (sigma * sigma);

  // dA_ij/df_i = A_ij (f_j - f_i) / sigma^2; A_ij and A_ji both move.
  for (std::size_t i = 0; i < n; ++i) {
    const auto fi = feats.patch(i);
    double* di = dfeat.data() + i * f;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto fj = feats.patch(j);
      double coef = 2.0 * g(i, j) * a(i, j) * inv_s2;
      if (spec.kind == RegularizerKind::smooth) coef -= 2.0 * a(i, j);
      coef *= spec.alpha;
      for (std::size_t d = 0; d < f; ++d) di[d] += coef * (fj[d] - fi[d]);
    }
  }
  return value;
}

}  // namespace detail

// Batch mean of asl_loss(predict(encode(x))) + alpha * R(A(encode(x))), with
// analytic gradients. The regularizer needs the Gaussian kernel and applies
// to examples whose `regularize` flag is set.
inline LossAndGradients loss_and_gradients(const ModelParams& p, const std::vector<TrainExample>& batch,
                                           const AsymLossParams& lp, const KernelSpec& k,
                                           const RegularizerSpec& spec) {
  if (batch.empty()) throw Error(ErrorKind::invalid_input, "empty training batch");
  lp.validate();
  spec.validate();
  if (spec.active() && k.kind != KernelKind::gaussian)
    throw Error(ErrorKind::configuration, "feature-graph regularizers require the gaussian kernel");

  const std::size_t f = p.dim_feat(), n_act = p.active_classes;
  LossAndGradients out;
  out.grads = p.zeros_like();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (const auto& ex : batch) {
    if (ex.targets.size() != n_act || ex.observed.size() != n_act)
      throw Error(ErrorKind::invalid_input, "label vectors must cover the active classes");
    const FeatureMap feats = encode(p, ex.raw);
    const std::size_t n = feats.patches();
    const auto pool = detail::mean_pool(feats, std::nullopt);
    auto probs = detail::logits(p, pool);
    for (double& v : probs) v = sigmoid(v);

    const auto asl = asl_loss(probs, ex.targets, lp, ex.observed);
    out.flagged += asl.flagged;
    out.asl += inv_b * asl.value;
    const auto dz = asl_logit_gradient(probs, ex.targets, lp, ex.observed);

    std::vector<double> dpool(f, 0.0);
    for (std::size_t c = 0; c < n_act; ++c) {
      if (dz[c] == 0.0) continue;
      out.grads.head_bias[c] += inv_b * dz[c];
      for (std::size_t kk = 0; kk < f; ++kk) {
        out.grads.head_weight(kk, c) += inv_b * dz[c] * pool[kk];
        dpool[kk] += dz[c] * p.head_weight(kk, c);
      }
    }

    std::vector<double> dfeat(n * f);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t kk = 0; kk < f; ++kk) dfeat[i * f + kk] = dpool[kk] / static_cast<double>(n);
    if (spec.active() && ex.regularize)
      out.regularizer += inv_b * detail::regularizer_feature_gradient(feats, k, spec, dfeat);

    // Back through tanh into the encoder.
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = feats.patch(i);
      const auto x = ex.raw.patch(i);
      for (std::size_t kk = 0; kk < f; ++kk) {
        const double dpre = inv_b * dfeat[i * f + kk] * (1.0 - y[kk] * y[kk]);
        if (dpre == 0.0) continue;
        out.grads.encoder_bias[kk] += dpre;
        for (std::size_t d = 0; d < x.size(); ++d) out.grads.encoder_weight(d, kk) += dpre * x[d];
      }
    }
  }
  out.loss = out.asl + out.regularizer;
  return out;
}

// Momentum velocity; empty until the first step.
struct SgdState {
  std::optional<ModelParams> velocity;
};

// velocity = momentum * velocity + grads; params -= lr * velocity
inline ModelParams sgd_step(const ModelParams& p, const ModelParams& grads, double lr, double momentum,
                            SgdState& state) {
  if (!(lr > 0.0)) throw Error(ErrorKind::invalid_input, "learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::invalid_input, "momentum must lie in [0, 1)");
  if (!state.velocity) state.velocity = p.zeros_like();
  ModelParams& v = *state.velocity;
  v.for_each_block([&](std::vector<double>& b) {
    for (double& x : b) x *= momentum;
  });
  add_scaled(v, grads, 1.0);
  ModelParams next = p;
  add_scaled(next, v, -lr);
  return next;
}

}  // namespace cuter
