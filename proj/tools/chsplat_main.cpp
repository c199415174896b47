// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// chsplat: batch CLI over the pipeline. Subcommands: synth (dataset
// generation), train (joint recovery), render (novel view / exposure
// sweep), eval (metrics report). Exit codes: 0 success, 2 config error,
// 3 data error, 4 numeric failure.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "chs/config.hpp"
#include "chs/datagen.hpp"
#include "chs/errors.hpp"
#include "chs/io.hpp"
#include "chs/metrics.hpp"
#include "chs/optimizer.hpp"
#include "chs/trajectory.hpp"

namespace fs = std::filesystem;
using namespace chs;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path,
                  "config file ('section.key = value' lines)");
  cmd->add_option("--set", c.sets,
                  "inline override, e.g. --set train.iterations=500");
  cmd->add_option("--threads", c.threads,
                  "worker threads; results are reproducible per thread count")
      ->capture_default_str();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = load_run_config(c.config_path);
  for (const std::string& s : c.sets)
    if (!apply_config_line(cfg, s))
      throw ConfigError("empty --set override '" + s + "'");
  return cfg;
}

// Every run records the fully resolved settings next to its outputs.
void write_resolved(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text_file(dir / "config_resolved.cfg", resolved_config(cfg));
}

std::vector<std::pair<double, Pose>> sample_trajectory(
    const SplineTrajectory& traj, const std::vector<double>& times) {
  std::vector<std::pair<double, Pose>> out;
  for (double t : times) out.push_back({t, pose_at(traj, t)});
  return out;
}

// --------------------------------------------------------------- commands

int cmd_synth(const Common& common, const std::string& out_dir) {
  const RunConfig cfg = resolve(common);
  ThreadPool pool(common.threads);
  generate(cfg.synth, out_dir, pool);
  write_resolved(out_dir, cfg);
  std::printf("wrote dataset (%d frames, %dx%d) to %s\n", cfg.synth.n_frames,
              cfg.synth.width, cfg.synth.height, out_dir.c_str());
  return 0;
}

int cmd_train(const Common& common, const std::string& data_dir,
              const std::string& out_dir, const std::string& exposure_mode,
              const std::vector<std::string>& ablate) {
  RunConfig cfg = resolve(common);
  if (!exposure_mode.empty()) {
    if (exposure_mode == "random")
      cfg.train.exposure_init = ExposureInit::random;
    else if (exposure_mode == "gt")
      cfg.train.exposure_init = ExposureInit::gt;
    else
      throw ConfigError("--exposure must be 'random' or 'gt', got '" +
                        exposure_mode + "'");
  }
  for (const std::string& t : ablate) {
    if (t == "exposure")
      cfg.train.optimize_exposure = false;
    else if (t == "crf")
      cfg.train.optimize_crf = false;
    else if (t == "trajectory")
      cfg.train.optimize_trajectory = false;
    else if (t == "blur")
      cfg.train.blur_model = false;
    else
      throw ConfigError(
          "--ablate accepts exposure, crf, trajectory, blur; got '" + t + "'");
  }

  write_resolved(out_dir, cfg);
  const Dataset dataset = load_dataset(data_dir);
  ThreadPool pool(common.threads);
  const TrainingState state =
      train(dataset, cfg.train, pool, fs::path(out_dir) / "metrics.jsonl");
  save_checkpoint(fs::path(out_dir) / "checkpoint.chs", state);

  std::printf("trained %lld iterations, %zu primitives -> %s\n",
              state.iteration, state.scene.prims.size(), out_dir.c_str());
  if (!dataset.sharp_ldr.empty()) {
    const auto [psnr_v, ssim_v] = evaluate_sharp(state, dataset, pool);
    std::printf("sharp references: psnr %.2f dB, ssim %.4f\n", psnr_v, ssim_v);
  }
  return 0;
}

int cmd_render(const Common& common, const std::string& checkpoint,
               double t, bool have_t, const std::string& pose_file,
               double dt, bool have_dt, const std::string& sweep,
               bool hdr_out, int wb_frame, const std::string& out_path) {
  const RunConfig cfg = resolve(common);
  const TrainingState state = load_checkpoint(checkpoint);
  ThreadPool pool(common.threads);

  Pose pose;
  if (have_t) {
    pose = pose_at(state.trajectory, t);
  } else if (!pose_file.empty()) {
    const auto poses = load_timed_poses(pose_file);
    if (poses.empty()) throw IoError("pose file has no poses: " + pose_file);
    pose = poses.front().second;
  } else {
    throw ConfigError("render needs --t <time> or --pose <file>");
  }

  const Image3 hdr =
      render_hdr(state.scene, pose, state.camera, cfg.imaging.raster, pool);

  if (hdr_out) {
    fs::create_directories(fs::path(out_path).parent_path());
    write_pfm(out_path, hdr);
    write_resolved(fs::path(out_path).parent_path(), cfg);
    std::printf("wrote HDR radiance to %s\n", out_path.c_str());
    return 0;
  }

  if (!sweep.empty()) {
    // --dt-sweep a:b:n renders n exposures linearly spaced in [a, b].
    double a = 0.0, b = 0.0;
    int n = 0;
    if (std::sscanf(sweep.c_str(), "%lf:%lf:%d", &a, &b, &n) != 3 || n < 1 ||
        !(a > 0.0) || !(b >= a))
      throw ConfigError("--dt-sweep expects a:b:n with 0 < a <= b, n >= 1");
    fs::create_directories(out_path);
    for (int i = 0; i < n; ++i) {
      const double dt_i =
          n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
      const Image3 ldr = retint(hdr, state.crf, dt_i, wb_frame, pool);
      char name[32];
      std::snprintf(name, sizeof(name), "sweep_%03d.png", i);
      write_png(fs::path(out_path) / name, ldr);
    }
    write_resolved(out_path, cfg);
    std::printf("wrote %d exposures (%g..%g s) to %s\n", n, a, b,
                out_path.c_str());
    return 0;
  }

  if (!have_dt) throw ConfigError("render needs --dt, --dt-sweep, or --hdr");
  if (!(dt > 0.0)) throw ConfigError("--dt must be positive");
  const Image3 ldr = retint(hdr, state.crf, dt, wb_frame, pool);
  fs::create_directories(fs::path(out_path).parent_path());
  write_png(out_path, ldr);
  write_resolved(fs::path(out_path).parent_path(), cfg);
  std::printf("wrote LDR frame (dt = %g s) to %s\n", dt, out_path.c_str());
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint,
             const std::string& data_dir, const std::string& out_path) {
  const RunConfig cfg = resolve(common);
  const TrainingState state = load_checkpoint(checkpoint);
  const Dataset dataset = load_dataset(data_dir);
  ThreadPool pool(common.threads);

  nlohmann::json report;
  report["iteration"] = state.iteration;
  report["n_prims"] = state.scene.prims.size();

  if (!dataset.sharp_ldr.empty()) {
    const auto [psnr_v, ssim_v] = evaluate_sharp(state, dataset, pool);
    report["psnr_sharp"] = psnr_v;
    report["ssim_sharp"] = ssim_v;
  }

  {
    std::vector<double> est, ref;
    for (const auto& f : state.exposures) est.push_back(f.dt());
    for (const auto& f : dataset.exposures) ref.push_back(f.dt());
    const CorrelationReport corr = exposure_correlation(est, ref);
    report["exposure"] = {{"spearman", corr.spearman},
                          {"kendall_tau_b", corr.kendall_tau_b},
                          {"pearson_log", corr.pearson_log},
                          {"pearson_linear", corr.pearson_linear}};
  }

  if (fs::exists(fs::path(data_dir) / "trajectory_gt.txt")) {
    const SplineTrajectory gt =
        load_trajectory(fs::path(data_dir) / "trajectory_gt.txt");
    std::vector<double> stamps;
    for (const auto& f : dataset.exposures)
      stamps.push_back(f.t_open + 0.5 * f.dt());
    const auto reference = sample_trajectory(gt, stamps);
    const AteReport final_ate =
        ate(sample_trajectory(state.trajectory, stamps), reference);
    // Baseline: the trajectory the training would have started from.
    const TrainingState init = init_state(dataset, cfg.train);
    const AteReport init_ate =
        ate(sample_trajectory(init.trajectory, stamps), reference);
    report["ate"] = {{"mean", final_ate.mean},
                     {"stddev", final_ate.stddev},
                     {"matched", final_ate.matched},
                     {"scale", final_ate.scale},
                     {"init_mean", init_ate.mean},
                     {"ratio_vs_init", final_ate.mean / init_ate.mean}};
  }

  if (fs::exists(fs::path(data_dir) / "crf_gt.csv")) {
    const auto rows =
        read_csv(fs::path(data_dir) / "crf_gt.csv", "log_exposure,r,g,b");
    std::vector<double> xs;
    std::array<std::vector<double>, 3> target;
    for (const auto& row : rows) {
      xs.push_back(row[0]);
      for (int c = 0; c < 3; ++c) target[c].push_back(row[1 + c]);
    }
    report["crf_l1"] = crf_curve_error(state.crf, xs, target);
  }

  report["config"] = resolved_config(cfg);

  fs::create_directories(fs::path(out_path).parent_path());
  write_text_file(out_path, report.dump(2) + "\n");
  write_resolved(fs::path(out_path).parent_path(), cfg);
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chsplat: joint HDR scene, trajectory, exposure, and camera "
               "response recovery from auto-exposure video"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "chsplat (container format CHS1, version 1)");

  Common common;
  std::string data_dir, out_path, checkpoint, exposure_mode, pose_file, sweep;
  std::vector<std::string> ablate;
  double t_at = 0.0, dt = 0.0;
  bool hdr_out = false;
  int wb_frame = 0;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, common);
  synth->add_option("--out", out_path, "output dataset directory")->required();

  CLI::App* train_cmd =
      app.add_subcommand("train", "run joint recovery on a dataset");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", out_path, "output directory")->required();
  train_cmd->add_option("--exposure", exposure_mode,
                        "shutter initialization: random or gt");
  train_cmd->add_option(
      "--ablate", ablate,
      "disable parts: exposure, crf, trajectory, blur (repeatable)");

  CLI::App* render =
      app.add_subcommand("render", "render a view from a checkpoint");
  add_common(render, common);
  render->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  CLI::Option* opt_t =
      render->add_option("--t", t_at, "timestamp on the learned trajectory");
  render->add_option("--pose", pose_file,
                     "pose file (one 't qw qx qy qz x y z' line) instead of --t");
  CLI::Option* opt_dt = render->add_option("--dt", dt, "shutter time, seconds");
  render->add_option("--dt-sweep", sweep,
                     "render n exposures a:b:n into the output directory");
  render->add_flag("--hdr", hdr_out, "write linear radiance as PFM instead");
  render->add_option("--wb-frame", wb_frame,
                     "frame whose white balance applies")
      ->capture_default_str();
  render->add_option("--out", out_path, "output file (or directory for sweeps)")
      ->required();

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint against a dataset");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")
      ->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", out_path, "report JSON path")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(common, out_path);
    if (train_cmd->parsed())
      return cmd_train(common, data_dir, out_path, exposure_mode, ablate);
    if (render->parsed())
      return cmd_render(common, checkpoint, t_at, opt_t->count() > 0,
                        pose_file, dt, opt_dt->count() > 0, sweep, hdr_out,
                        wb_frame, out_path);
    if (eval_cmd->parsed())
      return cmd_eval(common, checkpoint, data_dir, out_path);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
