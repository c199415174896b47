// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include "chs/config.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "chs/errors.hpp"
#include "chs/io.hpp"
#include "chs/optimizer.hpp"
#include "doctest.h"

using namespace chs;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
  return fs::temp_directory_path() / "chs_config_cli_tests";
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the installed command-line binary, capturing exit code and combined
// stdout/stderr.
struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  fs::create_directories(temp_root());
  static int counter = 0;
  const fs::path log =
      temp_root() / ("cli_log_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(CHSPLAT_BIN) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

// Overrides that keep the end-to-end dataset small enough for subprocess
// round trips.
std::string tiny_overrides() {
  return "--set synth.n_gaussians=12 --set synth.width=12 "
         "--set synth.height=12 --set synth.n_frames=8 "
         "--set synth.n_gt=2 --set synth.seed=3";
}

// Shared tiny dataset, synthesized once per process through the CLI.
const fs::path& tiny_dataset() {
  static const fs::path dir = [] {
    const fs::path p = temp_root() / "tiny_ds";
    fs::remove_all(p);
    const CliResult r =
        run_cli("synth --out " + p.string() + " " + tiny_overrides());
    REQUIRE(r.code == 0);
    return p;
  }();
  return dir;
}

// Shared tiny training run (5 iterations) used by render and eval cases.
const fs::path& tiny_run() {
  static const fs::path dir = [] {
    const fs::path p = temp_root() / "tiny_run";
    fs::remove_all(p);
    const CliResult r = run_cli(
        "train --data " + tiny_dataset().string() + " --out " + p.string() +
        " --exposure gt --set train.iterations=5 "
        "--set train.metrics_interval=2 --set train.prune_interval=0");
    REQUIRE(r.code == 0);
    return p;
  }();
  return dir;
}

}  // namespace

// ------------------------------------------------------------ config file

TEST_CASE("canonical echo reparses to an identical echo") {
  RunConfig cfg;
  const std::string echo = resolved_config(cfg);
  RunConfig reparsed;
  for (const auto& line : split_lines(echo)) apply_config_line(reparsed, line);
  CHECK(resolved_config(reparsed) == echo);

  // A modified config must round-trip just as exactly, including values
  // that need full double precision.
  apply_setting(cfg, "train.lr_mean", "1.2499999999999991e-4");
  apply_setting(cfg, "synth.trajectory", "shake");
  apply_setting(cfg, "synth.exposure", "random-log-uniform");
  apply_setting(cfg, "train.blur_model", "false");
  apply_setting(cfg, "train.exposure_init", "gt");
  apply_setting(cfg, "loss.lambda_dssim", "0.33333333333333331");
  const std::string echo2 = resolved_config(cfg);
  RunConfig reparsed2;
  for (const auto& line : split_lines(echo2))
    apply_config_line(reparsed2, line);
  CHECK(resolved_config(reparsed2) == echo2);
  CHECK(echo2 != echo);
}

TEST_CASE("echo lists every key once and all echoed keys are accepted") {
  const std::string echo = resolved_config(RunConfig{});
  std::set<std::string> keys;
  RunConfig fresh;
  int assignments = 0;
  for (const auto& line : split_lines(echo)) {
    const auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    CHECK(keys.insert(key).second);  // no duplicate keys
    CHECK(apply_config_line(fresh, line));
    ++assignments;
  }
  CHECK(assignments == static_cast<int>(keys.size()));
  CHECK(assignments >= 50);  // synth + train + loss + imaging sections
  // Every section is represented.
  for (const char* prefix : {"synth.", "train.", "loss.", "imaging."}) {
    bool found = false;
    for (const auto& k : keys)
      if (k.rfind(prefix, 0) == 0) found = true;
    CHECK_MESSAGE(found, "missing section ", prefix);
  }
}

TEST_CASE("assignments reach every section with exact values") {
  RunConfig cfg;
  apply_setting(cfg, "synth.n_frames", "12");
  CHECK(cfg.synth.n_frames == 12);
  apply_setting(cfg, "synth.trajectory", "screw");
  CHECK(cfg.synth.trajectory == TrajectoryKind::screw);
  apply_setting(cfg, "synth.exposure", "constant");
  CHECK(cfg.synth.exposure == ExposureLaw::constant);
  apply_setting(cfg, "train.iterations", "123");
  CHECK(cfg.train.iterations == 123);
  apply_setting(cfg, "train.lr_mean", "1.25e-4");
  CHECK(cfg.train.lr_mean == 1.25e-4);
  apply_setting(cfg, "train.optimize_crf", "false");
  CHECK(cfg.train.optimize_crf == false);
  apply_setting(cfg, "train.exposure_init", "gt");
  CHECK(cfg.train.exposure_init == ExposureInit::gt);
  apply_setting(cfg, "train.seed", "42");
  CHECK(cfg.train.seed == 42);
  apply_setting(cfg, "loss.lambda_exposure", "0.5");
  CHECK(cfg.train.loss.lambda_exposure == 0.5);
  apply_setting(cfg, "imaging.cov_floor", "0.375");
  CHECK(cfg.imaging.raster.cov_floor == 0.375);
  apply_setting(cfg, "imaging.n_virtual", "7");
  CHECK(cfg.imaging.n_virtual == 7);
}

TEST_CASE("unknown keys and malformed values are rejected by name") {
  RunConfig cfg;
  try {
    apply_setting(cfg, "synth.n_bananas", "3");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("synth.n_bananas") != std::string::npos);
  }
  try {
    apply_setting(cfg, "train.iterations", "twelve");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.iterations") != std::string::npos);
    CHECK(std::string(e.what()).find("twelve") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(cfg, "train.lr_mean", "1.0x"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "train.lr_mean", ""), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "train.blur_model", "maybe"),
                  ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "synth.trajectory", "spiral"),
                  ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "synth.exposure", "manual"), ConfigError);
  CHECK_THROWS_AS(apply_setting(cfg, "train.exposure_init", "guess"),
                  ConfigError);
  // Rejected assignments must not have mutated anything.
  CHECK(resolved_config(cfg) == resolved_config(RunConfig{}));
}

TEST_CASE("line parser handles comments, blanks, and missing assignments") {
  RunConfig cfg;
  CHECK(apply_config_line(cfg, "") == false);
  CHECK(apply_config_line(cfg, "   \t  ") == false);
  CHECK(apply_config_line(cfg, "# a full-line comment") == false);
  CHECK(apply_config_line(cfg, "  train.iterations = 77  # trailing note"));
  CHECK(cfg.train.iterations == 77);
  CHECK(apply_config_line(cfg, "\ttrain.seed=9\r"));
  CHECK(cfg.train.seed == 9);
  CHECK_THROWS_AS(apply_config_line(cfg, "train.iterations 88"), ConfigError);
}

TEST_CASE("config files load with line-numbered errors") {
  fs::create_directories(temp_root());
  const fs::path good = temp_root() / "good.cfg";
  write_text_file(good,
                  "# tiny run\n"
                  "train.iterations = 7\n"
                  "\n"
                  "synth.width = 24  # narrow\n");
  const RunConfig cfg = load_run_config(good);
  CHECK(cfg.train.iterations == 7);
  CHECK(cfg.synth.width == 24);

  const fs::path bad = temp_root() / "bad.cfg";
  write_text_file(bad,
                  "train.iterations = 7\n"
                  "synth.width = 24\n"
                  "synth.depth = 3\n");
  try {
    load_run_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":3:") != std::string::npos);
    CHECK(msg.find("synth.depth") != std::string::npos);
  }

  CHECK_THROWS_AS(load_run_config(temp_root() / "no_such.cfg"), IoError);
}

// ------------------------------------------------------------ CLI binary

TEST_CASE("version and help exit cleanly") {
  const CliResult ver = run_cli("--version");
  CHECK(ver.code == 0);
  CHECK(ver.output.find("CHS1") != std::string::npos);
  const CliResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.output.find("synth") != std::string::npos);
  CHECK(help.output.find("train") != std::string::npos);
  const CliResult none = run_cli("");
  CHECK(none.code == 2);  // a subcommand is required
}

TEST_CASE("synth writes a complete dataset and reruns byte-identically") {
  const fs::path& ds = tiny_dataset();
  CHECK(fs::exists(ds / "meta.json"));
  CHECK(fs::exists(ds / "exposures.csv"));
  CHECK(fs::exists(ds / "poses_noisy.txt"));
  CHECK(fs::exists(ds / "trajectory_gt.txt"));
  CHECK(fs::exists(ds / "crf_gt.csv"));
  CHECK(fs::exists(ds / "config_resolved.cfg"));
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", i);
    CHECK(fs::exists(ds / "frames" / name));
  }

  // The recorded resolved config is a canonical echo: it must reload and
  // re-echo without any drift, and it must carry the overrides.
  const RunConfig recon = load_run_config(ds / "config_resolved.cfg");
  CHECK(resolved_config(recon) == slurp(ds / "config_resolved.cfg"));
  CHECK(recon.synth.n_gaussians == 12);
  CHECK(recon.synth.seed == 3);

  // Same command, fresh directory: every output byte-identical.
  const fs::path again = temp_root() / "tiny_ds_again";
  fs::remove_all(again);
  const CliResult r =
      run_cli("synth --out " + again.string() + " " + tiny_overrides());
  REQUIRE(r.code == 0);
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(ds)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), ds);
    CAPTURE(rel.string());
    REQUIRE(fs::exists(again / rel));
    CHECK(slurp(entry.path()) == slurp(again / rel));
    ++compared;
  }
  CHECK(compared >= 8);
}

TEST_CASE("train writes resolved config, metrics, and a checkpoint") {
  const fs::path& run = tiny_run();
  CHECK(fs::exists(run / "config_resolved.cfg"));
  CHECK(fs::exists(run / "metrics.jsonl"));
  CHECK(fs::exists(run / "checkpoint.chs"));

  const RunConfig recon = load_run_config(run / "config_resolved.cfg");
  CHECK(recon.train.iterations == 5);
  CHECK(recon.train.exposure_init == ExposureInit::gt);

  const TrainingState state = load_checkpoint(run / "checkpoint.chs");
  CHECK(state.iteration == 5);
  CHECK(state.scene.prims.size() > 0);
  CHECK(state.exposures.size() == 8);

  // Metrics: one JSON object per line, finite losses.
  const auto lines = split_lines(slurp(run / "metrics.jsonl"));
  CHECK(lines.size() >= 3);  // init line + iterations 0, 2, 4
  for (const auto& line : lines) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("loss")) CHECK(std::isfinite(j["loss"].get<double>()));
  }

  // Identical command, fresh directory: byte-identical checkpoint.
  const fs::path again = temp_root() / "tiny_run_again";
  fs::remove_all(again);
  const CliResult r = run_cli(
      "train --data " + tiny_dataset().string() + " --out " + again.string() +
      " --exposure gt --set train.iterations=5 "
      "--set train.metrics_interval=2 --set train.prune_interval=0");
  REQUIRE(r.code == 0);
  CHECK(slurp(run / "checkpoint.chs") == slurp(again / "checkpoint.chs"));
  CHECK(slurp(run / "metrics.jsonl") == slurp(again / "metrics.jsonl"));
}

TEST_CASE("render produces single frames, sweeps, and HDR dumps") {
  const fs::path ck = tiny_run() / "checkpoint.chs";
  const fs::path out = temp_root() / "render";
  fs::remove_all(out);

  const CliResult single =
      run_cli("render --checkpoint " + ck.string() +
              " --t 0.05 --dt 0.02 --out " + (out / "frame.png").string());
  CHECK(single.code == 0);
  const Image3 png = read_png(out / "frame.png");
  CHECK(png.width == 12);
  CHECK(png.height == 12);

  const CliResult sweep =
      run_cli("render --checkpoint " + ck.string() +
              " --t 0.05 --dt-sweep 0.01:0.04:3 --out " +
              (out / "sweep").string());
  CHECK(sweep.code == 0);
  CHECK(fs::exists(out / "sweep" / "sweep_000.png"));
  CHECK(fs::exists(out / "sweep" / "sweep_001.png"));
  CHECK(fs::exists(out / "sweep" / "sweep_002.png"));
  CHECK(!fs::exists(out / "sweep" / "sweep_003.png"));
  // Longer exposures must not darken the tonemapped frame.
  const Image3 lo = read_png(out / "sweep" / "sweep_000.png");
  const Image3 hi = read_png(out / "sweep" / "sweep_002.png");
  double sum_lo = 0.0, sum_hi = 0.0;
  for (double v : lo.data) sum_lo += v;
  for (double v : hi.data) sum_hi += v;
  CHECK(sum_hi >= sum_lo);

  const CliResult hdr =
      run_cli("render --checkpoint " + ck.string() + " --t 0.05 --hdr --out " +
              (out / "radiance.pfm").string());
  CHECK(hdr.code == 0);
  const Image3 pfm = read_pfm(out / "radiance.pfm");
  CHECK(pfm.width == 12);
  CHECK(pfm.height == 12);

  // A pose file can replace the trajectory timestamp.
  const CliResult posed =
      run_cli("render --checkpoint " + ck.string() + " --pose " +
              (tiny_dataset() / "poses_noisy.txt").string() +
              " --dt 0.02 --out " + (out / "posed.png").string());
  CHECK(posed.code == 0);
  CHECK(fs::exists(out / "posed.png"));
}

TEST_CASE("eval writes a metrics report") {
  const fs::path report_path = temp_root() / "eval" / "report.json";
  fs::remove_all(report_path.parent_path());
  const CliResult r = run_cli(
      "eval --checkpoint " + (tiny_run() / "checkpoint.chs").string() +
      " --data " + tiny_dataset().string() + " --out " + report_path.string());
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(report_path));
  CHECK(j["iteration"].get<long long>() == 5);
  CHECK(j["n_prims"].get<int>() > 0);
  CHECK(std::isfinite(j["psnr_sharp"].get<double>()));
  CHECK(j["ssim_sharp"].get<double>() <= 1.0);
  CHECK(j["exposure"]["spearman"].get<double>() <= 1.0);
  CHECK(j["exposure"]["spearman"].get<double>() >= -1.0);
  CHECK(j["exposure"].contains("kendall_tau_b"));
  CHECK(j["exposure"].contains("pearson_log"));
  CHECK(j["ate"]["mean"].get<double>() >= 0.0);
  CHECK(j["ate"]["init_mean"].get<double>() > 0.0);
  CHECK(j["ate"]["ratio_vs_init"].get<double>() > 0.0);
  CHECK(j["crf_l1"].get<double>() >= 0.0);
  // The embedded config echo is itself parseable.
  RunConfig echoed;
  for (const auto& line : split_lines(j["config"].get<std::string>()))
    apply_config_line(echoed, line);
  CHECK(resolved_config(echoed) == j["config"].get<std::string>());
}

TEST_CASE("failures map to documented exit codes") {
  const fs::path scratch = temp_root() / "err";
  fs::remove_all(scratch);

  // 2: configuration problems (bad keys, bad values, bad flags).
  const CliResult bad_key = run_cli("synth --out " + (scratch / "a").string() +
                                    " --set bogus.key=1");
  CHECK(bad_key.code == 2);
  CHECK(bad_key.output.find("bogus.key") != std::string::npos);
  CHECK(run_cli("synth --out " + (scratch / "b").string() +
                " --set train.iterations=soon")
            .code == 2);
  CHECK(run_cli("train --data " + tiny_dataset().string() + " --out " +
                (scratch / "c").string() + " --exposure banana")
            .code == 2);
  CHECK(run_cli("train --data " + tiny_dataset().string() + " --out " +
                (scratch / "d").string() + " --ablate spoon")
            .code == 2);
  CHECK(run_cli("render --checkpoint " +
                (tiny_run() / "checkpoint.chs").string() +
                " --t 0.05 --out " + (scratch / "no_mode.png").string())
            .code == 2);
  CHECK(run_cli("render --checkpoint " +
                (tiny_run() / "checkpoint.chs").string() +
                " --t 0.05 --dt-sweep 0.04:0.01:3 --out " +
                (scratch / "sweep").string())
            .code == 2);
  CHECK(run_cli("train --data x").code == 2);  // missing required --out
  CHECK(run_cli("notacommand").code == 2);

  // 3: missing or unreadable data.
  CHECK(run_cli("train --data " + (scratch / "missing_ds").string() +
                " --out " + (scratch / "e").string())
            .code == 3);
  CHECK(run_cli("render --checkpoint " + (scratch / "missing.chs").string() +
                " --t 0.05 --dt 0.02 --out " + (scratch / "f.png").string())
            .code == 3);
  CHECK(run_cli("synth --out " + (scratch / "g").string() + " --config " +
                (scratch / "missing.cfg").string())
            .code == 3);
}
