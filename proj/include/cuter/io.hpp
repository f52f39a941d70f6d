#pragma once

// File formats and serialization: FPM1 feature maps, CMP1 checkpoints, JSON
// configs and reports (all carrying schema_version), CSV time series, and
// stream dumps.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cuter/assessor.hpp"
#include "cuter/driver.hpp"
#include "cuter/error.hpp"
#include "cuter/model.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/spectral_cut.hpp"
#include "cuter/stream.hpp"

namespace cuter::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint32_t kFpm1Version = 1;

static_assert(std::numeric_limits<float>::is_iec559, "float32 payloads need IEEE-754 floats");

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

// Little-endian cursor over a byte buffer; errors carry the source name and
// the offset at which the read failed.
class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw Error(ErrorKind::format, source_ + ": byte offset " + std::to_string(at) + ": " + what);
  }
  [[noreturn]] void fail(const std::string& what) const { fail(what, pos_); }

  void expect_magic(std::string_view magic) {
    if (remaining() < magic.size()) fail("truncated magic");
    if (bytes_.compare(pos_, magic.size(), magic) != 0)
      fail("bad magic, expected \"" + std::string(magic) + "\"");
    pos_ += magic.size();
  }

  std::uint32_t u32(const char* field) {
    if (remaining() < 4) fail(std::string("truncated ") + field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(u32("payload"))); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::format, path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::invalid_input, path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::invalid_input, path.string() + ": write failed");
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorKind::size_limit, std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

// ---- FPM1 -----------------------------------------------------------------

// Values are stored as float32; a map read from FPM1 re-encodes to the same
// bytes.
inline std::string encode_fpm1(const FeatureMap& fm) {
  if (fm.values.size() != fm.patches() * fm.dim)
    throw Error(ErrorKind::invalid_input, "feature payload does not match grid shape");
  std::string out = "FPM1";
  detail::put_u32(out, kFpm1Version);
  detail::put_u32(out, detail::checked_u32(fm.grid_h, "grid_h"));
  detail::put_u32(out, detail::checked_u32(fm.grid_w, "grid_w"));
  detail::put_u32(out, detail::checked_u32(fm.dim, "dim"));
  out.reserve(out.size() + 4 * fm.values.size());
  for (double v : fm.values) detail::put_f32(out, v);
  return out;
}

inline FeatureMap decode_fpm1(const std::string& bytes, const std::string& source = "<memory>") {
  detail::Reader r(bytes, source);
  r.expect_magic("FPM1");
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kFpm1Version)
    r.fail("unsupported version " + std::to_string(v), version_at);
  FeatureMap fm;
  fm.grid_h = r.u32("grid_h");
  fm.grid_w = r.u32("grid_w");
  const std::size_t dim_at = r.offset();
  fm.dim = r.u32("dim");
  if (fm.grid_h == 0 || fm.grid_w == 0 || fm.dim == 0) r.fail("zero extent in header", dim_at - 8);
  const std::uint64_t count = static_cast<std::uint64_t>(fm.grid_h) * fm.grid_w * fm.dim;
  if (count * 4 != r.remaining())
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(count * 4));
  fm.values.resize(static_cast<std::size_t>(count));
  for (auto& v : fm.values) {
    const std::size_t at = r.offset();
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite payload value", at);
  }
  return fm;
}

inline void write_fpm1(const std::filesystem::path& path, const FeatureMap& fm) {
  detail::write_file(path, encode_fpm1(fm));
}

inline FeatureMap read_fpm1(const std::filesystem::path& path) {
  return decode_fpm1(detail::read_file(path), path.string());
}

// Regular files ending in .fpm1 in a directory, sorted by name; a plain file
// path is returned as is.
inline std::vector<std::filesystem::path> list_fpm1_inputs(const std::filesystem::path& where) {
  namespace fs = std::filesystem;
  if (!fs::exists(where)) throw Error(ErrorKind::invalid_input, where.string() + ": no such file or directory");
  if (!fs::is_directory(where)) return {where};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(where))
    if (e.is_regular_file() && e.path().extension() == ".fpm1") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- CMP1 checkpoints ------------------------------------------------------

// "CMP1", u32 dim_in, dim_feat, n_classes_max, active_classes, then float32
// blocks: encoder weight, encoder bias, head weight, head bias.
inline std::string encode_checkpoint(const ModelParams& p) {
  p.validate();
  std::string out = "CMP1";
  detail::put_u32(out, detail::checked_u32(p.dim_in(), "dim_in"));
  detail::put_u32(out, detail::checked_u32(p.dim_feat(), "dim_feat"));
  detail::put_u32(out, detail::checked_u32(p.n_classes_max(), "n_classes_max"));
  detail::put_u32(out, detail::checked_u32(p.active_classes, "active_classes"));
  p.for_each_block([&](const std::vector<double>& block) {
    for (double v : block) detail::put_f32(out, v);
  });
  return out;
}

inline ModelParams decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>") {
  detail::Reader r(bytes, source);
  r.expect_magic("CMP1");
  const std::size_t dims_at = r.offset();
  const std::size_t dim_in = r.u32("dim_in"), dim_feat = r.u32("dim_feat");
  const std::size_t n_classes = r.u32("n_classes_max"), active = r.u32("active_classes");
  if (dim_in == 0 || dim_feat == 0 || n_classes == 0 || active > n_classes) r.fail("inconsistent dimensions", dims_at);
  const std::uint64_t count = static_cast<std::uint64_t>(dim_in) * dim_feat + dim_feat +
                              static_cast<std::uint64_t>(dim_feat) * n_classes + n_classes;
  if (count * 4 != r.remaining())
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(count * 4));
  ModelParams p = ModelParams::zeros(dim_in, dim_feat, n_classes, active);
  p.for_each_block([&](std::vector<double>& block) {
    for (auto& v : block) v = r.f32();
  });
  return p;
}

inline void write_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  detail::write_file(path, encode_checkpoint(p));
}

inline ModelParams read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

// ---- JSON helpers ----------------------------------------------------------

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::format, source + ": byte offset " + std::to_string(e.byte) + ": invalid JSON");
  }
}

inline Json read_json(const std::filesystem::path& path) {
  return parse_json(detail::read_file(path), path.string());
}

inline void write_json(const std::filesystem::path& path, const Json& j) { detail::write_file(path, dump(j)); }

// Non-finite reals have no JSON literal; they are written as null.
inline Json real(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const Box& b) { return Json::array({b.h1, b.w1, b.h2, b.w2}); }

inline Json to_json(const KernelSpec& k) {
  Json j;
  j["kind"] = to_string(k.kind);
  j["sigma"] = k.sigma ? Json(*k.sigma) : Json(nullptr);
  j["tau_sim"] = k.tau_sim;
  j["epsilon_floor"] = k.epsilon_floor;
  return j;
}

// ---- config parsing with JSON-path errors -----------------------------------

namespace detail {

[[noreturn]] inline void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::configuration, (path.empty() ? std::string("/") : path) + ": " + what);
}

// Reads the members of one JSON object into a struct; rejects unknown and
// ill-typed members and, on a failed semantic check, names the member whose
// value breaks it.
template <class T>
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path, T& target) : j_(j), path_(std::move(path)), target_(target) {
    if (!j_.is_object()) config_error(path_, "expected an object");
  }

  template <class V>
  ObjectReader& field(const std::string& name, V T::*member) {
    return custom(name, [member](const Json& v, const std::string& path, T& t) {
      t.*member = scalar<V>(v, path);
    });
  }

  template <class F>
  ObjectReader& custom(const std::string& name, F&& parse) {
    known_.insert(name);
    if (!j_.contains(name)) return *this;
    const std::string path = path_ + "/" + name;
    parse(j_.at(name), path, target_);
    order_.push_back(name);
    setters_[name] = [j = j_.at(name), path, parse](T& t) { parse(j, path, t); };
    return *this;
  }

  // Applies `check` to the parsed struct. When it throws, members are reset
  // to their defaults one at a time; the first whose reset clears the error
  // is reported. Cross-member failures fall back to the object's path.
  template <class Check>
  void finish(Check&& check) {
    for (const auto& [key, value] : j_.items())
      if (!known_.count(key)) config_error(path_ + "/" + key, "unknown field");
    try {
      check(target_);
    } catch (const Error& e) {
      for (const auto& name : order_) {
        T probe{};
        for (const auto& other : order_)
          if (other != name) setters_[other](probe);
        try {
          check(probe);
        } catch (const Error&) {
          continue;
        }
        config_error(path_ + "/" + name, e.message());
      }
      config_error(path_, e.message());
    }
  }

  template <class V>
  static V scalar(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) config_error(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) config_error(path, "expected an integer");
      if (std::is_unsigned_v<V> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        config_error(path, "expected a non-negative integer");
      return v.get<V>();
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) config_error(path, "expected a number");
      return v.get<V>();
    } else {
      if (!v.is_string()) config_error(path, "expected a string");
      return v.get<std::string>();
    }
  }

 private:
  const Json& j_;
  std::string path_;
  T& target_;
  std::set<std::string> known_;
  std::vector<std::string> order_;
  std::map<std::string, std::function<void(T&)>> setters_;
};

// Enum member parsed from a string via `from`; an unknown name is reported
// at the member's path.
template <class T, class E, class From>
auto enum_field(E T::*member, From from) {
  return [member, from](const Json& v, const std::string& path, T& t) {
    const auto s = ObjectReader<T>::template scalar<std::string>(v, path);
    try {
      t.*member = from(s);
    } catch (const Error&) {
      config_error(path, "unknown value '" + s + "'");
    }
  };
}

}  // namespace detail

inline StreamConfig stream_config_from_json(const Json& j, const std::string& path = "/stream") {
  StreamConfig c;
  detail::ObjectReader<StreamConfig>(j, path, c)
      .field("n_tasks", &StreamConfig::n_tasks)
      .field("classes_per_task", &StreamConfig::classes_per_task)
      .field("grid_h", &StreamConfig::grid_h)
      .field("grid_w", &StreamConfig::grid_w)
      .field("dim_in", &StreamConfig::dim_in)
      .field("mean_labels_per_image", &StreamConfig::mean_labels_per_image)
      .field("max_objects_per_image", &StreamConfig::max_objects_per_image)
      .field("imbalance_ratio", &StreamConfig::imbalance_ratio)
      .field("cooccur_bias", &StreamConfig::cooccur_bias)
      .field("noise_sigma", &StreamConfig::noise_sigma)
      .field("max_prototype_cosine", &StreamConfig::max_prototype_cosine)
      .field("samples_per_task", &StreamConfig::samples_per_task)
      .field("seed", &StreamConfig::seed)
      .finish([](const StreamConfig& s) { s.validate(); });
  return c;
}

inline Json to_json(const StreamConfig& c) {
  Json j;
  j["n_tasks"] = c.n_tasks;
  j["classes_per_task"] = c.classes_per_task;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["dim_in"] = c.dim_in;
  j["mean_labels_per_image"] = c.mean_labels_per_image;
  j["max_objects_per_image"] = c.max_objects_per_image;
  j["imbalance_ratio"] = c.imbalance_ratio;
  j["cooccur_bias"] = c.cooccur_bias;
  j["noise_sigma"] = c.noise_sigma;
  j["max_prototype_cosine"] = c.max_prototype_cosine;
  j["samples_per_task"] = c.samples_per_task;
  j["seed"] = c.seed;
  return j;
}

inline KernelSpec kernel_from_json(const Json& j, const std::string& path, KernelSpec defaults = {}) {
  KernelSpec k = defaults;
  detail::ObjectReader<KernelSpec>(j, path, k)
      .custom("kind", detail::enum_field(&KernelSpec::kind, kernel_kind_from_string))
      .custom("sigma",
              [](const Json& v, const std::string& p, KernelSpec& t) {
                if (v.is_null()) {
                  t.sigma.reset();
                } else {
                  t.sigma = detail::ObjectReader<KernelSpec>::scalar<double>(v, p);
                }
              })
      .field("tau_sim", &KernelSpec::tau_sim)
      .field("epsilon_floor", &KernelSpec::epsilon_floor)
      .finish([](const KernelSpec& s) { s.validate(); });
  return k;
}

// Command-line kernel spec: KIND[:key=value,...] with KIND one of gaussian,
// cosine-continuous, cosine-binarized and keys sigma (a number or "median"),
// tau_sim, epsilon_floor. Example: "gaussian:sigma=1.5".
inline KernelSpec kernel_from_string(const std::string& text) {
  const auto colon = text.find(':');
  KernelSpec k;
  auto fail = [&](const std::string& m) { throw Error(ErrorKind::configuration, "kernel '" + text + "': " + m); };
  try {
    k.kind = kernel_kind_from_string(text.substr(0, colon));
  } catch (const Error& e) {
    fail(e.message());
  }
  if (colon != std::string::npos) {
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + item + "'");
      const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
      if (key == "sigma" && value == "median") {
        k.sigma.reset();
        continue;
      }
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) fail("'" + key + "' needs a number, got '" + value + "'");
      if (key == "sigma") {
        k.sigma = v;
      } else if (key == "tau_sim") {
        k.tau_sim = v;
      } else if (key == "epsilon_floor") {
        k.epsilon_floor = v;
      } else {
        fail("unknown key '" + key + "'");
      }
    }
  }
  try {
    k.validate();
  } catch (const Error& e) {
    fail(e.message());
  }
  return k;
}

inline Json to_json(const SelectionPolicy& s) { return Json{{"tau1", s.tau1}, {"tau2", s.tau2}}; }

inline Json to_json(const RegularizerSpec& r) { return Json{{"kind", to_string(r.kind)}, {"alpha", r.alpha}}; }

inline Json to_json(const AsymLossParams& a) { return Json{{"gamma_pos", a.gamma_pos}, {"gamma_neg", a.gamma_neg}}; }

// A simulate config: one RunConfig plus optional ladder fields. When
// `variants` is present the run becomes an ablation over variants x seeds.
struct SimulateConfig {
  RunConfig run;
  std::vector<Variant> variants;     // empty: single run of run.variant
  std::vector<std::uint64_t> seeds;  // empty: {run.seed}
};

inline RunConfig run_config_from_json(const Json& j, std::vector<Variant>* variants = nullptr,
                                      std::vector<std::uint64_t>* seeds = nullptr) {
  using R = RunConfig;
  using Reader = detail::ObjectReader<R>;
  RunConfig c;
  Reader reader(j, "", c);
  reader
      .custom("schema_version",
              [](const Json& v, const std::string& p, R&) {
                if (Reader::scalar<int>(v, p) != kSchemaVersion)
                  detail::config_error(p, "unsupported schema_version, expected " + std::to_string(kSchemaVersion));
              })
      .custom("stream", [](const Json& v, const std::string& p, R& t) { t.stream = stream_config_from_json(v, p); })
      .custom("kernel", [](const Json& v, const std::string& p, R& t) { t.kernel = kernel_from_json(v, p); })
      .custom("graph_kernel",
              [](const Json& v, const std::string& p, R& t) {
                t.graph_kernel = kernel_from_json(v, p, RunConfig{}.graph_kernel);
              })
      .custom("selection",
              [](const Json& v, const std::string& p, R& t) {
                SelectionPolicy s;
                detail::ObjectReader<SelectionPolicy>(v, p, s)
                    .field("tau1", &SelectionPolicy::tau1)
                    .field("tau2", &SelectionPolicy::tau2)
                    .finish([](const SelectionPolicy& x) { x.validate(); });
                t.selection = s;
              })
      .custom("regularizer",
              [](const Json& v, const std::string& p, R& t) {
                RegularizerSpec s;
                detail::ObjectReader<RegularizerSpec>(v, p, s)
                    .custom("kind", detail::enum_field(&RegularizerSpec::kind, regularizer_kind_from_string))
                    .field("alpha", &RegularizerSpec::alpha)
                    .finish([](const RegularizerSpec& x) { x.validate(); });
                t.regularizer = s;
              })
      .custom("asl",
              [](const Json& v, const std::string& p, R& t) {
                AsymLossParams s;
                detail::ObjectReader<AsymLossParams>(v, p, s)
                    .field("gamma_pos", &AsymLossParams::gamma_pos)
                    .field("gamma_neg", &AsymLossParams::gamma_neg)
                    .finish([](const AsymLossParams& x) { x.validate(); });
                t.asl = s;
              })
      .field("n_iters_maskcut", &R::n_iters_maskcut)
      .field("capacity", &R::capacity)
      .custom("accounting", detail::enum_field(&R::accounting, accounting_from_string))
      .field("lr", &R::lr)
      .field("momentum", &R::momentum)
      .field("replay_batch", &R::replay_batch)
      .field("stream_batch", &R::stream_batch)
      .field("eval_every", &R::eval_every)
      .custom("variant", detail::enum_field(&R::variant, variant_from_string))
      .field("seed", &R::seed)
      .field("dim_feat", &R::dim_feat)
      .field("encoder_gain", &R::encoder_gain)
      .custom("label_mode", detail::enum_field(&R::label_mode, label_mode_from_string))
      .field("regularize_replay", &R::regularize_replay)
      .field("align_labels", &R::align_labels)
      .field("eval_samples", &R::eval_samples)
      .field("probe_samples", &R::probe_samples)
      .custom("variants",
              [variants](const Json& v, const std::string& p, R&) {
                if (!v.is_array() || v.empty()) detail::config_error(p, "expected a non-empty array of variant names");
                std::vector<Variant> parsed;
                for (std::size_t i = 0; i < v.size(); ++i) {
                  const auto path = p + "/" + std::to_string(i);
                  const auto s = Reader::scalar<std::string>(v[i], path);
                  try {
                    parsed.push_back(variant_from_string(s));
                  } catch (const Error&) {
                    detail::config_error(path, "unknown variant '" + s + "'");
                  }
                }
                if (variants) *variants = std::move(parsed);
              })
      .custom("seeds", [seeds](const Json& v, const std::string& p, R&) {
        if (!v.is_array() || v.empty()) detail::config_error(p, "expected a non-empty array of seeds");
        std::vector<std::uint64_t> parsed;
        for (std::size_t i = 0; i < v.size(); ++i)
          parsed.push_back(Reader::scalar<std::uint64_t>(v[i], p + "/" + std::to_string(i)));
        if (seeds) *seeds = std::move(parsed);
      });
  reader.finish([](const RunConfig& rc) {
    RunConfig probe = rc;
    probe.stream.seed = probe.seed;
    probe.validate();
  });
  return c;
}

inline SimulateConfig simulate_config_from_json(const Json& j) {
  SimulateConfig s;
  s.run = run_config_from_json(j, &s.variants, &s.seeds);
  return s;
}

// Every field, defaults included; feeding it back reproduces the run.
inline Json to_json(const RunConfig& c) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["variant"] = to_string(c.variant);
  j["seed"] = c.seed;
  j["stream"] = to_json(c.stream);
  j["kernel"] = to_json(c.kernel);
  j["graph_kernel"] = to_json(c.graph_kernel);
  j["selection"] = to_json(c.selection);
  j["regularizer"] = to_json(c.regularizer);
  j["asl"] = to_json(c.asl);
  j["n_iters_maskcut"] = c.n_iters_maskcut;
  j["capacity"] = c.capacity;
  j["accounting"] = to_string(c.accounting);
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["replay_batch"] = c.replay_batch;
  j["stream_batch"] = c.stream_batch;
  j["eval_every"] = c.eval_every;
  j["dim_feat"] = c.dim_feat;
  j["encoder_gain"] = c.encoder_gain;
  j["label_mode"] = to_string(c.label_mode);
  j["regularize_replay"] = c.regularize_replay;
  j["align_labels"] = c.align_labels;
  j["eval_samples"] = c.eval_samples;
  j["probe_samples"] = c.probe_samples;
  return j;
}

inline Json to_json(const SimulateConfig& s) {
  Json j = to_json(s.run);
  if (!s.variants.empty()) {
    Json v = Json::array();
    for (auto x : s.variants) v.push_back(to_string(x));
    j["variants"] = v;
  }
  if (!s.seeds.empty()) j["seeds"] = s.seeds;
  return j;
}

// ---- CutResult --------------------------------------------------------------

// Row-major run lengths alternating unset/set, starting with unset cells
// (a leading 0 when the first cell is set).
inline std::vector<std::size_t> mask_rle(const GridMask& m) {
  std::vector<std::size_t> runs;
  std::uint8_t current = 0;
  std::size_t len = 0;
  for (auto cell : m.cells) {
    const std::uint8_t v = cell ? 1 : 0;
    if (v != current) {
      runs.push_back(len);
      current = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline GridMask mask_from_rle(const std::vector<std::size_t>& runs, std::size_t h, std::size_t w) {
  GridMask m(h, w);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (pos + runs[i] > m.cells.size()) throw Error(ErrorKind::format, "mask run lengths overflow the grid");
    std::fill_n(m.cells.begin() + static_cast<std::ptrdiff_t>(pos), runs[i], static_cast<std::uint8_t>(i % 2));
    pos += runs[i];
  }
  if (pos != m.cells.size()) throw Error(ErrorKind::format, "mask run lengths do not cover the grid");
  return m;
}

inline Json to_json(const CutResult& r) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["grid_h"] = r.grid_h;
  j["grid_w"] = r.grid_w;
  j["early_stop"] = to_string(r.early_stop);
  Json its = Json::array();
  for (const auto& it : r.iterations) {
    Json x;
    x["mask_rle"] = mask_rle(it.mask);
    x["bbox"] = to_json(it.bbox);
    x["energy"] = it.energy;
    x["fiedler"] = it.fiedler;
    its.push_back(std::move(x));
  }
  j["iterations"] = std::move(its);
  return j;
}

inline EarlyStop early_stop_from_string(const std::string& s) {
  for (EarlyStop e : {EarlyStop::none, EarlyStop::too_few_nodes, EarlyStop::disconnected, EarlyStop::empty_mask})
    if (to_string(e) == s) return e;
  throw Error(ErrorKind::format, "unknown early_stop '" + s + "'");
}

inline CutResult cut_result_from_json(const Json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw Error(ErrorKind::format, "unsupported schema_version");
    CutResult r;
    r.grid_h = j.at("grid_h").get<std::size_t>();
    r.grid_w = j.at("grid_w").get<std::size_t>();
    r.early_stop = early_stop_from_string(j.at("early_stop").get<std::string>());
    for (const auto& x : j.at("iterations")) {
      CutIteration it;
      it.mask = mask_from_rle(x.at("mask_rle").get<std::vector<std::size_t>>(), r.grid_h, r.grid_w);
      const auto b = x.at("bbox").get<std::vector<int>>();
      if (b.size() != 4) throw Error(ErrorKind::format, "bbox needs 4 entries");
      it.bbox = {b[0], b[1], b[2], b[3]};
      it.energy = x.at("energy").get<double>();
      it.fiedler = x.at("fiedler").get<double>();
      r.iterations.push_back(std::move(it));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed cut result: ") + e.what());
  }
}

// ---- reports ----------------------------------------------------------------

inline Json to_json(const AssessmentReport& r, const std::vector<std::string>& inputs = {}) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["source_id"] = r.source_id;
  j["mean_fiedler"] = r.mean_fiedler;
  j["sample_count"] = r.sample_count;
  j["laplacian"] = to_string(r.laplacian);
  j["kernel"] = to_json(r.kernel);
  if (!inputs.empty()) j["inputs"] = inputs;
  j["per_sample"] = r.per_sample;
  Json skipped = Json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"index", s.index}, {"reason", s.reason}});
  j["skipped"] = std::move(skipped);
  return j;
}

inline Json to_json(const BoundTrialReport& r) {
  Json j;
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["tightest_margin"] = real(r.max_slack);
  j["resamples"] = r.resamples;
  return j;
}

inline Json to_json(const BufferSnapshot& s) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["task_id"] = s.task_id;
  j["capacity"] = s.capacity;
  j["used"] = s.used;
  j["accounting"] = to_string(s.accounting);
  Json h = Json::object();
  for (const auto& [c, n] : s.histogram) h[std::to_string(c)] = n;
  j["histogram"] = std::move(h);
  Json items = Json::array();
  for (const auto& m : s.items) items.push_back({{"labels", m.labels}, {"confidence", m.confidence}, {"area", m.area}});
  j["items"] = std::move(items);
  return j;
}

// ---- CSV --------------------------------------------------------------------

inline std::string csv_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "run_id,task_id,step,mAP,CF1,OF1,AP50,mean_fiedler,buffer_ratio\n";
  for (const auto& r : rows)
    out += r.run_id + "," + std::to_string(r.task_id) + "," + std::to_string(r.step) + "," + csv_real(r.mAP) + "," +
           csv_real(r.CF1) + "," + csv_real(r.OF1) + "," + csv_real(r.AP50) + "," + csv_real(r.mean_fiedler) + "," +
           csv_real(r.buffer_ratio) + "\n";
  return out;
}

inline std::string fiedler_csv(const std::string& run_id, const std::vector<FiedlerPoint>& trace) {
  std::string out = "run_id,task_id,step,mean_fiedler,AP50\n";
  for (const auto& p : trace)
    out += run_id + "," + std::to_string(p.task_id) + "," + std::to_string(p.step) + "," + csv_real(p.mean_fiedler) +
           "," + csv_real(p.ap50) + "\n";
  return out;
}

inline std::string ablation_csv(const AblationTable& t) {
  std::string out = "variant,seed,avg_mAP,last_mAP,avg_CF1,last_CF1,avg_OF1,last_OF1,final_fiedler,final_AP50\n";
  for (const auto& r : t.rows) {
    const auto& s = r.summary;
    out += to_string(r.variant) + "," + std::to_string(r.seed) + "," + csv_real(s.mAP.avg) + "," +
           csv_real(s.mAP.last) + "," + csv_real(s.CF1.avg) + "," + csv_real(s.CF1.last) + "," + csv_real(s.OF1.avg) +
           "," + csv_real(s.OF1.last) + "," + csv_real(s.final_fiedler) + "," + csv_real(s.final_ap50) + "\n";
  }
  return out;
}

// Seed-means per variant, in first-appearance order.
inline Json to_json(const AblationTable& t) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  std::vector<Variant> order;
  for (const auto& r : t.rows)
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  Json means = Json::array();
  for (Variant v : order) {
    Json m;
    m["variant"] = to_string(v);
    m["avg_mAP"] = t.mean(v, [](const RunSummary& s) { return s.mAP.avg; });
    m["last_mAP"] = t.mean(v, [](const RunSummary& s) { return s.mAP.last; });
    m["avg_CF1"] = t.mean(v, [](const RunSummary& s) { return s.CF1.avg; });
    m["last_CF1"] = t.mean(v, [](const RunSummary& s) { return s.CF1.last; });
    m["avg_OF1"] = t.mean(v, [](const RunSummary& s) { return s.OF1.avg; });
    m["last_OF1"] = t.mean(v, [](const RunSummary& s) { return s.OF1.last; });
    m["final_fiedler"] = t.mean(v, [](const RunSummary& s) { return s.final_fiedler; });
    m["final_AP50"] = t.mean(v, [](const RunSummary& s) { return s.final_ap50; });
    means.push_back(std::move(m));
  }
  j["seed_means"] = std::move(means);
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"variant", to_string(r.variant)},
                    {"seed", r.seed},
                    {"last_mAP", r.summary.mAP.last},
                    {"avg_mAP", r.summary.mAP.avg},
                    {"final_fiedler", r.summary.final_fiedler},
                    {"final_AP50", r.summary.final_ap50}});
  j["rows"] = std::move(rows);
  return j;
}

// ---- artifacts --------------------------------------------------------------

// metrics.csv, fiedler.csv, buffer_task{k}.json, checkpoint.cmp1 and
// config.echo.json under `dir` (created if missing).
inline void write_artifacts(const std::filesystem::path& dir, const RunArtifacts& a) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "metrics.csv", metrics_csv(a.metrics));
  detail::write_file(dir / "fiedler.csv", fiedler_csv(a.run_id, a.fiedler));
  for (const auto& b : a.buffers) write_json(dir / ("buffer_task" + std::to_string(b.task_id) + ".json"), to_json(b));
  write_checkpoint(dir / "checkpoint.cmp1", a.final_params);
  write_json(dir / "config.echo.json", to_json(a.config));
}

// ---- stream dump --------------------------------------------------------------

inline Json sample_sidecar(const StreamSample& s) {
  const auto& o = oracle_view(s);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["task_id"] = s.task_id;
  j["observed_labels"] = s.observed_labels;
  j["full_labels"] = o.full_labels;
  Json boxes = Json::array();
  for (const auto& b : o.gt_boxes) boxes.push_back({{"class", b.cls}, {"bbox", to_json(b.box)}});
  j["gt_boxes"] = std::move(boxes);
  return j;
}

// Writes every stream sample as sample_TTT_IIIII.fpm1 plus a .json sidecar;
// returns the number of samples written.
inline std::size_t dump_stream(const StreamConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Stream stream(cfg);
  std::size_t written = 0;
  do {
    std::size_t index = 0;
    while (auto batch = stream.next_batch(64))
      for (const auto& s : *batch) {
        char stem[48];
        std::snprintf(stem, sizeof stem, "sample_%03zu_%05zu", stream.current_task(), index++);
        write_fpm1(dir / (std::string(stem) + ".fpm1"), s.raw);
        write_json(dir / (std::string(stem) + ".json"), sample_sidecar(s));
        ++written;
      }
  } while (stream.advance_task());
  return written;
}

}  // namespace cuter::io
