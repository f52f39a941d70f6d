#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "cuter/io.hpp"

using namespace cuter;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cuter_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome cli(const std::string& args) {
  static const fs::path logs = scratch("logs");
  const auto out = logs / "stdout.txt", err = logs / "stderr.txt";
  const std::string cmd =
      std::string(CUTER_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = io::detail::read_file(out);
  o.err = io::detail::read_file(err);
  return o;
}

fs::path quick_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "config.json";
  io::detail::write_file(path, R"({"seed": 3, "stream": {"n_tasks": 2, "samples_per_task": 16},
    "eval_samples": 20, "probe_samples": 4)" + extra + "}");
  return path;
}

void write_maps(const fs::path& dir, std::size_t count) {
  StreamConfig cfg;
  Stream stream(cfg);
  std::size_t i = 0;
  for (const auto& s : stream.held_out(count, 0)) io::write_fpm1(dir / ("m" + std::to_string(i++) + ".fpm1"), s.raw);
}

std::string slurp(const fs::path& p) { return io::detail::read_file(p); }

}  // namespace

TEST(CliAssess, DirectoryOfThreeFiles) {
  const auto dir = scratch("assess");
  fs::create_directories(dir / "maps");
  write_maps(dir / "maps", 3);
  const auto o = cli("assess --features " + (dir / "maps").string() + " --out " + (dir / "r.json").string());
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = io::read_json(dir / "r.json");
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("sample_count"), 3);
  EXPECT_EQ(j.at("per_sample").size(), 3u);
}

TEST(CliAssess, EmptyDirectoryHasNoInputs) {
  const auto dir = scratch("assess_empty");
  const auto o = cli("assess --features " + dir.string());
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("no inputs"), std::string::npos) << o.err;
}

TEST(CliAssess, CorruptMagicNamesTheFile) {
  const auto dir = scratch("assess_corrupt");
  write_maps(dir, 2);
  auto bytes = slurp(dir / "m1.fpm1");
  bytes[0] = 'Q';
  io::detail::write_file(dir / "m1.fpm1", bytes);
  const auto o = cli("assess --features " + dir.string());
  EXPECT_EQ(o.code, 3);
  EXPECT_NE(o.err.find("m1.fpm1"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("byte offset 0"), std::string::npos) << o.err;
}

TEST(CliCut, IterationsBoundAndRoundTrip) {
  const auto dir = scratch("cut");
  write_maps(dir, 1);
  const auto map = (dir / "m0.fpm1").string();
  const auto o = cli("cut --features " + map + " --iters 2 --out " + (dir / "c.json").string());
  ASSERT_EQ(o.code, 0) << o.err;
  const auto text = slurp(dir / "c.json");
  const auto r = io::cut_result_from_json(io::Json::parse(text));
  EXPECT_LE(r.iterations.size(), 2u);
  EXPECT_EQ(io::dump(io::to_json(r)), text);
  EXPECT_EQ(r, maskcut(io::read_fpm1(map), KernelSpec{}, 2));
}

TEST(CliCut, ZeroIterationsIsArgumentError) {
  const auto dir = scratch("cut_zero");
  write_maps(dir, 1);
  EXPECT_EQ(cli("cut --features " + (dir / "m0.fpm1").string() + " --iters 0").code, 2);
  EXPECT_EQ(cli("cut --features " + (dir / "m0.fpm1").string() + " --kernel sobel").code, 2);
  EXPECT_EQ(cli("cut").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(CliSimulate, WritesArtifactsDeterministically) {
  const auto dir = scratch("simulate");
  const auto cfg = quick_config(dir);
  ASSERT_EQ(cli("simulate --config " + cfg.string() + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("simulate --config " + cfg.string() + " --out " + (dir / "b").string()).code, 0);
  for (auto name : {"metrics.csv", "fiedler.csv", "buffer_task0.json", "buffer_task1.json", "checkpoint.cmp1",
                    "config.echo.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / name)) << name;
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  }
  // The echo alone reproduces the run.
  ASSERT_EQ(cli("simulate --config " + (dir / "a" / "config.echo.json").string() + " --out " + (dir / "c").string())
                .code,
            0);
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "config.echo.json"), slurp(dir / "c" / "config.echo.json"));
}

TEST(CliSimulate, LadderEmitsComparison) {
  const auto dir = scratch("ladder");
  const auto cfg = quick_config(dir, R"(, "variants": ["rs_baseline", "cuter"], "seeds": [0, 1])");
  const auto o = cli("simulate --config " + cfg.string() + " --out " + (dir / "out").string());
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("rs_baseline"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "comparison.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "cuter-s1" / "metrics.csv"));
  const auto j = io::read_json(dir / "out" / "comparison.json");
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("seed_means").size(), 2u);
  EXPECT_EQ(j.at("rows").size(), 4u);
}

TEST(CliSimulate, InvalidConfigNamesThePath) {
  const auto dir = scratch("badconfig");
  const auto cfg = quick_config(dir, R"(, "selection": {"tau1": 0.95})");
  const auto o = cli("simulate --config " + cfg.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("/selection/tau1"), std::string::npos) << o.err;
  io::detail::write_file(dir / "broken.json", "{ not json");
  EXPECT_NE(cli("simulate --config " + (dir / "broken.json").string() + " --out " + (dir / "o").string()).code, 0);
}

TEST(CliVerify, SuitesExitZeroWhenBoundsHold) {
  const auto dir = scratch("verify");
  const auto l = cli("verify lemma1 --trials 200 --out " + (dir / "l.json").string());
  EXPECT_EQ(l.code, 0) << l.err;
  EXPECT_EQ(io::read_json(dir / "l.json").at("schema_version"), 1);
  EXPECT_EQ(cli("verify theorem1 --trials 200").code, 0);
  const auto g = cli("verify gradcheck --trials 2");
  EXPECT_EQ(g.code, 0) << g.err;
  EXPECT_NE(g.out.find("max relative error"), std::string::npos);
  EXPECT_EQ(cli("verify buffer-balance").code, 0);
  EXPECT_EQ(cli("verify unknown-suite").code, 2);
}

TEST(CliVerify, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("verify_repeat");
  ASSERT_EQ(cli("verify ncut-oracle --trials 100 --seed 0 --out " + (dir / "a.json").string()).code, 0);
  ASSERT_EQ(cli("verify ncut-oracle --trials 100 --seed 0 --out " + (dir / "b.json").string()).code, 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
}

TEST(CliDumpStream, RoundTripsThroughAssess) {
  const auto dir = scratch("dump");
  const auto cfg = quick_config(dir);
  const auto o = cli("dump-stream --config " + cfg.string() + " --out " + (dir / "s").string());
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(io::list_fpm1_inputs(dir / "s").size(), 32u);
  const auto a = cli("assess --features " + (dir / "s").string() + " --max-samples 5");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(io::Json::parse(a.out).at("sample_count"), 5);
}
