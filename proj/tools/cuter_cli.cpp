// Command-line front end: assess, cut, simulate, verify, dump-stream.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cuter/cuter.hpp"

namespace fs = std::filesystem;
using cuter::Error;
using cuter::ErrorKind;
using cuter::io::Json;

namespace {

enum Exit : int { ok = 0, argument_error = 2, input_error = 3, verification_failure = 4 };

struct UsageError {
  std::string message;
};

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::configuration: return argument_error;
    default: return input_error;
  }
}

void write_or_print(const std::string& out, const Json& j) {
  if (out.empty() || out == "-") {
    std::fputs(cuter::io::dump(j).c_str(), stdout);
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    cuter::io::write_json(out, j);
  }
}

// ---- assess -----------------------------------------------------------------

struct AssessArgs {
  std::string features, kernel = "gaussian", laplacian = "unnormalized", source_id, out;
  std::size_t max_samples = 64;
};

int run_assess(const AssessArgs& a) {
  const auto kernel = cuter::io::kernel_from_string(a.kernel);
  if (a.laplacian != "unnormalized" && a.laplacian != "normalized")
    throw UsageError{"--laplacian must be unnormalized or normalized"};
  auto inputs = cuter::io::list_fpm1_inputs(a.features);
  if (inputs.empty()) throw Error(ErrorKind::invalid_input, "no inputs: " + a.features + " holds no .fpm1 files");
  if (inputs.size() > a.max_samples) inputs.resize(a.max_samples);
  std::vector<cuter::FeatureMap> maps;
  std::vector<std::string> names;
  for (const auto& p : inputs) {
    maps.push_back(cuter::io::read_fpm1(p));
    names.push_back(p.filename().string());
  }
  const std::string source = a.source_id.empty() ? fs::path(a.features).filename().string() : a.source_id;
  const auto which =
      a.laplacian == "normalized" ? cuter::LaplacianKind::normalized : cuter::LaplacianKind::unnormalized;
  const auto report = cuter::average_fiedler(maps, kernel, which, source);
  write_or_print(a.out, cuter::io::to_json(report, names));
  std::fprintf(stderr, "mean_fiedler %.9g over %zu samples (%zu skipped)\n", report.mean_fiedler,
               report.sample_count, report.skipped.size());
  return ok;
}

// ---- cut --------------------------------------------------------------------

struct CutArgs {
  std::string features, kernel = "gaussian", out;
  std::size_t iters = cuter::kDefaultMaskCutIterations;
};

int run_cut(const CutArgs& a) {
  const auto kernel = cuter::io::kernel_from_string(a.kernel);
  const auto fm = cuter::io::read_fpm1(a.features);
  const auto result = cuter::maskcut(fm, kernel, a.iters);
  write_or_print(a.out, cuter::io::to_json(result));
  std::fprintf(stderr, "%zu iteration(s), early stop: %s\n", result.iterations.size(),
               cuter::to_string(result.early_stop).c_str());
  return ok;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config, out;
};

void print_comparison(const cuter::AblationTable& t, const std::vector<cuter::Variant>& order) {
  std::printf("%-12s %9s %9s %9s %9s %10s %9s\n", "variant", "avg_mAP", "last_mAP", "last_CF1", "last_OF1",
              "fiedler", "AP50");
  for (auto v : order) {
    auto m = [&](auto f) { return t.mean(v, f); };
    std::printf("%-12s %9.4f %9.4f %9.4f %9.4f %10.4f %9.4f\n", cuter::to_string(v).c_str(),
                m([](const cuter::RunSummary& s) { return s.mAP.avg; }),
                m([](const cuter::RunSummary& s) { return s.mAP.last; }),
                m([](const cuter::RunSummary& s) { return s.CF1.last; }),
                m([](const cuter::RunSummary& s) { return s.OF1.last; }),
                m([](const cuter::RunSummary& s) { return s.final_fiedler; }),
                m([](const cuter::RunSummary& s) { return s.final_ap50; }));
  }
}

int run_simulate(const SimulateArgs& a) {
  const auto sim = cuter::io::simulate_config_from_json(cuter::io::read_json(a.config));
  const fs::path out(a.out);
  if (sim.variants.empty() && sim.seeds.empty()) {
    const auto art = cuter::run_mocl(sim.run);
    cuter::io::write_artifacts(out, art);
    std::printf("%s: last mAP %.4f, avg mAP %.4f, final mean Fiedler %.4f, AP50 %.4f\n", art.run_id.c_str(),
                art.summary.mAP.last, art.summary.mAP.avg, art.summary.final_fiedler, art.summary.final_ap50);
    return ok;
  }
  const std::vector<cuter::Variant> variants =
      sim.variants.empty() ? std::vector<cuter::Variant>{sim.run.variant} : sim.variants;
  const std::vector<std::uint64_t> seeds = sim.seeds.empty() ? std::vector<std::uint64_t>{sim.run.seed} : sim.seeds;
  cuter::AblationTable table;
  for (auto v : variants)
    for (auto s : seeds) {
      cuter::RunConfig cfg = sim.run;
      cfg.variant = v;
      cfg.seed = s;
      const auto art = cuter::run_mocl(cfg);
      cuter::io::write_artifacts(out / art.run_id, art);
      table.rows.push_back({v, s, art.summary});
      std::fprintf(stderr, "%s: last mAP %.4f\n", art.run_id.c_str(), art.summary.mAP.last);
    }
  fs::create_directories(out);
  cuter::io::detail::write_file(out / "comparison.csv", cuter::io::ablation_csv(table));
  cuter::io::write_json(out / "comparison.json", cuter::io::to_json(table));
  print_comparison(table, variants);
  return ok;
}

// ---- verify -----------------------------------------------------------------

struct VerifyArgs {
  std::string suite, out;
  std::size_t trials = 0;  // 0: suite default
  std::uint64_t seed = 0;
};

Json bound_json(const cuter::BoundTrialReport& r) { return cuter::io::to_json(r); }

int run_verify(const VerifyArgs& a) {
  auto trials_or = [&](std::size_t d) { return a.trials ? a.trials : d; };
  Json j;
  j["schema_version"] = cuter::io::kSchemaVersion;
  j["suite"] = a.suite;
  j["seed"] = a.seed;
  std::size_t violations = 0;
  if (a.suite == "lemma1") {
    const auto r = cuter::verify_lemma1(trials_or(200), 10, a.seed);
    j["trials"] = r.expansion.trials;
    j["expansion"] = bound_json(r.expansion);
    j["conductance"] = bound_json(r.conductance);
    violations = r.expansion.violations + r.conductance.violations;
    std::printf("lemma1: %zu trials, %zu violations (expansion %zu, conductance %zu), tightest margin %.3g\n",
                r.expansion.trials, violations, r.expansion.violations, r.conductance.violations,
                std::min(r.expansion.max_slack, r.conductance.max_slack));
  } else if (a.suite == "theorem1") {
    // Half the trials use two blocks, the rest three.
    const std::size_t n = trials_or(200);
    const auto two = cuter::verify_theorem1(n / 2, 2, 12, 0.05, a.seed);
    const auto three = cuter::verify_theorem1(n - n / 2, 3, 12, 0.05, a.seed + 1);
    j["trials"] = n;
    j["blocks2"] = bound_json(two);
    j["blocks3"] = bound_json(three);
    violations = two.violations + three.violations;
    std::printf("theorem1: %zu trials, %zu violations, tightest margin %.3g\n", n, violations,
                std::min(two.max_slack, three.max_slack));
  } else if (a.suite == "gradcheck") {
    const std::size_t n = trials_or(20);
    double worst = 0.0;
    Json kinds = Json::array();
    for (auto kind : {cuter::RegularizerKind::none, cuter::RegularizerKind::low_rank, cuter::RegularizerKind::sparse,
                      cuter::RegularizerKind::smooth}) {
      const auto r = cuter::gradcheck(kind, n, a.seed);
      violations += r.failures;
      worst = std::max(worst, r.max_rel_error);
      kinds.push_back({{"regularizer", cuter::to_string(kind)},
                       {"configs", r.configs},
                       {"coordinates", r.coordinates},
                       {"failures", r.failures},
                       {"max_rel_error", r.max_rel_error},
                       {"max_abs_error", r.max_abs_error}});
      std::printf("gradcheck %-9s %zu configs, %zu coordinates, %zu failures, max relative error %.3e\n",
                  cuter::to_string(kind).c_str(), r.configs, r.coordinates, r.failures, r.max_rel_error);
    }
    j["trials"] = n;
    j["regularizers"] = std::move(kinds);
    j["max_rel_error"] = worst;
    std::printf("max relative error %.3e\n", worst);
  } else if (a.suite == "ncut-oracle") {
    const std::size_t n = trials_or(100);
    const auto r = cuter::verify_ncut_oracle(n, 50, 12, a.seed);
    const bool ratio_ok = 10 * r.within_ratio >= 9 * r.trials;
    violations = r.below_oracle + r.planted_misses + (ratio_ok ? 0 : 1);
    j["trials"] = r.trials;
    j["below_oracle"] = r.below_oracle;
    j["within_ratio"] = r.within_ratio;
    j["ratio"] = r.ratio;
    j["worst_ratio"] = r.worst_ratio;
    j["planted_trials"] = r.planted_trials;
    j["planted_misses"] = r.planted_misses;
    std::printf("ncut-oracle: %zu graphs, %zu below oracle, %zu within %.1fx (worst %.3f), planted %zu/%zu exact\n",
                r.trials, r.below_oracle, r.within_ratio, r.ratio, r.worst_ratio,
                r.planted_trials - r.planted_misses, r.planted_trials);
  } else if (a.suite == "localization") {
    const auto r = cuter::verify_maskcut_localization(trials_or(500), 0.1, a.seed);
    violations = 10 * r.localized >= 9 * r.objects ? 0 : 1;
    j["trials"] = r.maps;
    j["objects"] = r.objects;
    j["localized"] = r.localized;
    j["iou_threshold"] = r.iou_threshold;
    j["mean_iou"] = r.mean_iou;
    std::printf("localization: %zu maps, %zu/%zu objects at IoU >= %.1f, mean IoU %.3f\n", r.maps, r.localized,
                r.objects, r.iou_threshold, r.mean_iou);
  } else if (a.suite == "buffer-balance") {
    std::vector<std::uint64_t> seeds;
    for (std::size_t s = 0; s < trials_or(5); ++s) seeds.push_back(a.seed + s);
    const auto r = cuter::verify_buffer_balance(10, 100.0, 200, 10000, seeds);
    violations = (r.worst_rebalanced <= 2.0 ? 0 : 1) + (r.best_vanilla >= 10.0 ? 0 : 1);
    Json reb = Json::array(), van = Json::array();
    for (double v : r.rebalanced_ratio) reb.push_back(cuter::io::real(v));
    for (double v : r.vanilla_ratio) van.push_back(cuter::io::real(v));
    j["trials"] = seeds.size();
    j["rebalanced_ratio"] = reb;
    j["vanilla_ratio"] = van;
    std::printf("buffer-balance: worst rebalanced ratio %.3g, best vanilla ratio %.3g\n", r.worst_rebalanced,
                r.best_vanilla);
  } else {
    throw UsageError{"unknown suite '" + a.suite + "'"};
  }
  j["violations"] = violations;
  if (!a.out.empty()) write_or_print(a.out, j);
  return violations ? verification_failure : ok;
}

// ---- dump-stream --------------------------------------------------------------

struct DumpArgs {
  std::string config, out;
};

int run_dump(const DumpArgs& a) {
  cuter::RunConfig cfg;
  if (!a.config.empty()) cfg = cuter::io::run_config_from_json(cuter::io::read_json(a.config));
  cuter::StreamConfig sc = cfg.stream;
  sc.seed = cfg.seed;
  const auto n = cuter::io::dump_stream(sc, a.out);
  std::printf("wrote %zu samples to %s\n", n, a.out.c_str());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-cut replay for multi-label online continual learning"};
  app.require_subcommand(1);

  AssessArgs assess;
  auto* a = app.add_subcommand("assess", "Average Fiedler value of a set of feature maps");
  a->add_option("--features", assess.features, "FPM1 file or directory of .fpm1 files")->required();
  a->add_option("--kernel", assess.kernel, "KIND[:sigma=..,tau_sim=..,epsilon_floor=..]");
  a->add_option("--laplacian", assess.laplacian, "unnormalized or normalized");
  a->add_option("--source-id", assess.source_id, "label stored in the report (default: input name)");
  a->add_option("--max-samples", assess.max_samples, "use at most this many files, in name order")
      ->check(CLI::Range(1, 1000000));
  a->add_option("--out", assess.out, "report JSON path (default: stdout)");

  CutArgs cut;
  auto* c = app.add_subcommand("cut", "MaskCut on one feature map");
  c->add_option("--features", cut.features, "FPM1 file")->required();
  c->add_option("--kernel", cut.kernel, "KIND[:sigma=..,tau_sim=..,epsilon_floor=..]");
  c->add_option("--iters", cut.iters, "MaskCut iterations (>= 1)")->check(CLI::Range(1, 1000000));
  c->add_option("--out", cut.out, "result JSON path (default: stdout)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run the continual learner on the synthetic stream");
  s->add_option("--config", sim.config, "run config JSON")->required();
  s->add_option("--out", sim.out, "artifacts directory")->required();

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Randomized checks of bounds, gradients and cuts");
  v->add_option("suite", ver.suite, "lemma1 | theorem1 | gradcheck | ncut-oracle | localization | buffer-balance")
      ->required()
      ->check(CLI::IsMember({"lemma1", "theorem1", "gradcheck", "ncut-oracle", "localization", "buffer-balance"}));
  v->add_option("--trials", ver.trials, "trials (default depends on the suite)")->check(CLI::Range(1, 1000000));
  v->add_option("--seed", ver.seed, "base seed");
  v->add_option("--out", ver.out, "report JSON path");

  DumpArgs dump;
  auto* d = app.add_subcommand("dump-stream", "Write the synthetic stream as FPM1 files with JSON sidecars");
  d->add_option("--config", dump.config, "run config JSON (stream section and seed are used)");
  d->add_option("--out", dump.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : argument_error;
  }

  try {
    if (*a) return run_assess(assess);
    if (*c) return run_cut(cut);
    if (*s) return run_simulate(sim);
    if (*v) return run_verify(ver);
    if (*d) return run_dump(dump);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return argument_error;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return input_error;
  }
  return argument_error;
}
