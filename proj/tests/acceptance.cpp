// Acceptance runner. `acceptance N` runs criterion N (1..10), `acceptance`
// runs all of them. Each prints one PASS/FAIL line; the exit status is
// nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cuter/cuter.hpp"

namespace fs = std::filesystem;
using namespace cuter;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1-6: randomized suites -----------------------------------------------------

Outcome lemma1() {
  const auto r = verify_lemma1(200, 10, 0);
  return {r.expansion.violations == 0 && r.conductance.violations == 0,
          fmt("200 graphs n<=10: %zu expansion and %zu conductance violations", r.expansion.violations,
              r.conductance.violations)};
}

Outcome theorem1() {
  const auto two = verify_theorem1(100, 2, 12, 0.05, 0);
  const auto three = verify_theorem1(100, 3, 12, 0.05, 1);
  return {two.violations + three.violations == 0,
          fmt("200 trials n=12 (100 with 2 blocks, 100 with 3): %zu violations, tightest margin %.3g",
              two.violations + three.violations, std::min(two.max_slack, three.max_slack))};
}

Outcome ncut_oracle() {
  const auto r = verify_ncut_oracle(100, 50, 12, 0);
  const bool pass = r.below_oracle == 0 && 10 * r.within_ratio >= 9 * r.trials && r.planted_misses == 0;
  return {pass, fmt("%zu below oracle, %zu/%zu within 1.2x (worst %.3f), planted %zu/%zu exact", r.below_oracle,
                    r.within_ratio, r.trials, r.worst_ratio, r.planted_trials - r.planted_misses, r.planted_trials)};
}

Outcome gradients() {
  bool pass = true;
  std::string detail;
  for (auto kind : {RegularizerKind::none, RegularizerKind::low_rank, RegularizerKind::sparse, RegularizerKind::smooth}) {
    const auto r = gradcheck(kind, 20, 0);
    pass = pass && r.failures == 0;
    detail += fmt("%s %zu/%zu bad, max rel %.2e; ", to_string(kind).c_str(), r.failures, r.coordinates,
                  r.max_rel_error);
  }
  return {pass, detail};
}

Outcome localization() {
  const auto r = verify_maskcut_localization(500, 0.1, 0);
  return {10 * r.localized >= 9 * r.objects,
          fmt("%zu/%zu objects at IoU >= 0.8 (%.3f), mean IoU %.3f", r.localized, r.objects, r.fraction(),
              r.mean_iou)};
}

Outcome buffer_balance() {
  const auto r = verify_buffer_balance(10, 100.0, 200, 10000, {0, 1, 2, 3, 4});
  return {r.worst_rebalanced <= 2.0 && r.best_vanilla >= 10.0,
          fmt("worst rebalanced ratio %.3g (<= 2), best vanilla ratio %.3g (>= 10)", r.worst_rebalanced,
              r.best_vanilla)};
}

// ---- 7-8: variant ladder ------------------------------------------------------------

// Criteria 7 and 8 share one ladder run; the seed-means are cached next to
// the binary's working directory, keyed by the exact config.
struct LadderMeans {
  double last_mAP[4]{}, fiedler[4]{}, ap50[4]{};
};

const std::vector<Variant> kLadder = {Variant::rs_baseline, Variant::cutrep, Variant::cuter, Variant::cuter_reg};
const std::vector<std::uint64_t> kSeeds = {0, 1, 2, 3, 4};

LadderMeans ladder() {
  const RunConfig base;
  const std::string key = io::dump(io::to_json(base));
  const fs::path cache = "acceptance_ladder_cache.json";
  if (fs::exists(cache)) {
    try {
      const auto j = io::read_json(cache);
      if (j.at("config").get<std::string>() == key) {
        LadderMeans m;
        for (std::size_t i = 0; i < kLadder.size(); ++i) {
          m.last_mAP[i] = j.at("last_mAP").at(i).get<double>();
          m.fiedler[i] = j.at("fiedler").at(i).get<double>();
          m.ap50[i] = j.at("AP50").at(i).get<double>();
        }
        std::printf("(ladder seed-means read from %s)\n", cache.string().c_str());
        return m;
      }
    } catch (const std::exception&) {
      // stale or unreadable cache: rerun
    }
  }
  const auto t = run_ablation(base, kLadder, kSeeds);
  LadderMeans m;
  io::Json j;
  j["schema_version"] = io::kSchemaVersion;
  j["config"] = key;
  for (std::size_t i = 0; i < kLadder.size(); ++i) {
    m.last_mAP[i] = t.mean(kLadder[i], [](const RunSummary& s) { return s.mAP.last; });
    m.fiedler[i] = t.mean(kLadder[i], [](const RunSummary& s) { return s.final_fiedler; });
    m.ap50[i] = t.mean(kLadder[i], [](const RunSummary& s) { return s.final_ap50; });
    j["variants"].push_back(to_string(kLadder[i]));
    j["last_mAP"].push_back(m.last_mAP[i]);
    j["fiedler"].push_back(m.fiedler[i]);
    j["AP50"].push_back(m.ap50[i]);
  }
  io::write_json(cache, j);
  for (std::size_t i = 0; i < kLadder.size(); ++i)
    std::printf("  %-12s last mAP %.4f  mean Fiedler %.4f  AP50 %.4f\n", to_string(kLadder[i]).c_str(),
                m.last_mAP[i], m.fiedler[i], m.ap50[i]);
  return m;
}

Outcome ablation_ordering() {
  const auto m = ladder();
  const double rs = m.last_mAP[0], rep = m.last_mAP[1], er = m.last_mAP[2], reg = m.last_mAP[3];
  const double d1 = rep - rs, d2 = er - rep, d3 = reg - er;
  const bool order = rs < rep && rep <= er && er <= reg;
  const bool largest = d1 > d2 && d1 > d3;
  return {order && largest,
          fmt("last mAP rs %.4f, cutrep %.4f, cuter %.4f, cuter_reg %.4f; order %s; increments %.4f/%.4f/%.4f, "
              "cutrep-rs largest: %s",
              rs, rep, er, reg, order ? "holds" : "broken", d1, d2, d3, largest ? "yes" : "no")};
}

Outcome fiedler_effect() {
  const auto m = ladder();
  const bool lower = m.fiedler[3] < m.fiedler[2];
  const bool ap_ok = m.ap50[3] >= m.ap50[2];
  return {lower && ap_ok, fmt("mean Fiedler cuter_reg %.4f vs cuter %.4f (%s); AP50 %.4f vs %.4f (%s)", m.fiedler[3],
                              m.fiedler[2], lower ? "lower" : "not lower", m.ap50[3], m.ap50[2],
                              ap_ok ? "not lower" : "lower")};
}

// ---- 9: sensitivity ---------------------------------------------------------------

double seed_mean_last(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  const auto t = run_ablation(cfg, {cfg.variant}, seeds);
  return t.mean(cfg.variant, [](const RunSummary& s) { return s.mAP.last; });
}

double relative_spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi > 0.0 ? (*hi - *lo) / *hi : 0.0;
}

Outcome sensitivity() {
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  RunConfig base;
  base.variant = Variant::cuter_reg;
  std::vector<double> by_alpha, by_tau;
  for (double a : {0.03, 0.1, 0.3}) {
    RunConfig c = base;
    c.regularizer.alpha = a;
    by_alpha.push_back(seed_mean_last(c, seeds));
  }
  for (auto [t1, t2] : {std::pair{0.5, 0.7}, std::pair{0.6, 0.8}, std::pair{0.7, 0.9}}) {
    RunConfig c = base;
    c.selection.tau1 = t1;
    c.selection.tau2 = t2;
    by_tau.push_back(t1 == base.selection.tau1 && t2 == base.selection.tau2 && base.regularizer.alpha == 0.1
                         ? by_alpha[1]
                         : seed_mean_last(c, seeds));
  }
  RunConfig big = base;
  big.regularizer.alpha = 10.0;
  const double at10 = seed_mean_last(big, seeds);
  const double sa = relative_spread(by_alpha), st = relative_spread(by_tau);
  const bool degrades = at10 < *std::min_element(by_alpha.begin(), by_alpha.end());
  return {sa <= 0.15 && st <= 0.15 && degrades,
          fmt("alpha 0.03/0.1/0.3: %.4f/%.4f/%.4f (spread %.1f%%); tau (.5,.7)/(.6,.8)/(.7,.9): %.4f/%.4f/%.4f "
              "(spread %.1f%%); alpha 10: %.4f (%s)",
              by_alpha[0], by_alpha[1], by_alpha[2], 100 * sa, by_tau[0], by_tau[1], by_tau[2], 100 * st, at10,
              degrades ? "degrades" : "does not degrade")};
}

// ---- 10: CLI determinism ----------------------------------------------------------

std::string slurp_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    all += fs::relative(f, root).string() + "\n";
    all += io::detail::read_file(f);
  }
  return all;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CUTER_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome cli_determinism() {
  const fs::path work = fs::absolute("acceptance_determinism");
  fs::remove_all(work);
  fs::create_directories(work);
  io::Json cfg;
  cfg["schema_version"] = io::kSchemaVersion;
  cfg["seed"] = 3;
  cfg["stream"] = {{"n_tasks", 2}, {"samples_per_task", 24}};
  cfg["eval_samples"] = 40;
  cfg["probe_samples"] = 8;
  io::write_json(work / "run.json", cfg);
  cfg["variants"] = {"rs_baseline", "cuter_reg"};
  io::write_json(work / "ladder.json", cfg);

  std::vector<std::string> compared;
  bool pass = true;
  for (int round = 0; round < 2; ++round) {
    const fs::path d = work / ("round" + std::to_string(round));
    const std::string q = "\"" + d.string() + "\"";
    const std::string w = "\"" + work.string() + "\"";
    int rc = 0;
    rc |= run_cli("dump-stream --config " + w + "/run.json --out " + q + "/stream");
    rc |= run_cli("assess --features " + q + "/stream --out " + q + "/assess.json");
    rc |= run_cli("cut --features " + q + "/stream/sample_000_00000.fpm1 --iters 3 --out " + q + "/cut.json");
    rc |= run_cli("simulate --config " + w + "/run.json --out " + q + "/sim");
    rc |= run_cli("simulate --config " + w + "/ladder.json --out " + q + "/ladder");
    rc |= run_cli("verify gradcheck --trials 2 --out " + q + "/gradcheck.json");
    rc |= run_cli("verify ncut-oracle --trials 100 --seed 0 --out " + q + "/ncut.json");
    rc |= run_cli("verify theorem1 --trials 20 --out " + q + "/theorem1.json");
    if (rc != 0) return {false, fmt("a CLI invocation failed in round %d", round)};
  }
  const std::string a = slurp_tree(work / "round0"), b = slurp_tree(work / "round1");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(work / "round0")) files += e.is_regular_file();
  pass = a == b && files > 0;
  return {pass, fmt("%zu files from dump-stream/assess/cut/simulate/verify, %s across two rounds", files,
                    a == b ? "byte-identical" : "DIFFERENT")};
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"Lemma 1 bounds", 60, lemma1},
      {"Theorem 1 bound", 30, theorem1},
      {"NCut relaxation vs oracle", 120, ncut_oracle},
      {"gradient checks", 120, gradients},
      {"MaskCut localization", 120, localization},
      {"buffer balance", 30, buffer_balance},
      {"ablation ordering", 900, ablation_ordering},
      {"Fiedler regularization effect", 900, fiedler_effect},
      {"sensitivity robustness", 1800, sensitivity},
      {"CLI determinism", 300, cli_determinism},
  };
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(all.size())) {
      std::fprintf(stderr, "usage: acceptance [1..10 ...]\n");
      return 2;
    }
    chosen.push_back(n);
  }
  if (chosen.empty())
    for (int i = 1; i <= static_cast<int>(all.size()); ++i) chosen.push_back(i);

  int failed = 0;
  for (int n : chosen) {
    const auto& c = all[static_cast<std::size_t>(n - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    std::printf("%s criterion %d (%s): %s [%.1fs, limit %.0fs%s]\n", pass ? "PASS" : "FAIL", n, c.name,
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
    failed += !pass;
  }
  return failed ? 1 : 0;
}
