// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Table-driven key dispatch: every setting has a parse closure and an echo
// closure over the same table, so the resolved echo can never drift from
// the accepted keys.
#include "chs/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chs/errors.hpp"
#include "chs/io.hpp"

namespace chs {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid number '" + value +
                      "'");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': invalid number '" + value +
                      "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid integer '" + value +
                      "'");
  }
  if (used != value.size())
    throw ConfigError("config key '" + key + "': invalid integer '" + value +
                      "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    value + "'");
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string bool_name(bool v) { return v ? "true" : "false"; }

// One table row per setting; `field` must be an lvalue expression over
// RunConfig `c`.
#define CHS_DOUBLE(name, field)                                            \
  Entry{name,                                                              \
        [](RunConfig& c, const std::string& v) {                           \
          c.field = parse_double(name, v);                                 \
        },                                                                 \
        [](const RunConfig& c) { return format_g17(c.field); }}
#define CHS_INT(name, field)                                               \
  Entry{name,                                                              \
        [](RunConfig& c, const std::string& v) {                           \
          c.field = static_cast<int>(parse_int(name, v));                  \
        },                                                                 \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define CHS_U64(name, field)                                               \
  Entry{name,                                                              \
        [](RunConfig& c, const std::string& v) {                           \
          c.field = static_cast<std::uint64_t>(parse_int(name, v));        \
        },                                                                 \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define CHS_BOOL(name, field)                                              \
  Entry{name,                                                              \
        [](RunConfig& c, const std::string& v) {                           \
          c.field = parse_bool(name, v);                                   \
        },                                                                 \
        [](const RunConfig& c) { return bool_name(c.field); }}

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = {
      // ------------------------------------------------------------ synth
      CHS_INT("synth.n_gaussians", synth.n_gaussians),
      CHS_INT("synth.width", synth.width),
      CHS_INT("synth.height", synth.height),
      CHS_INT("synth.n_frames", synth.n_frames),
      Entry{"synth.trajectory",
            [](RunConfig& c, const std::string& v) {
              c.synth.trajectory = parse_trajectory(v);
            },
            [](const RunConfig& c) {
              return std::string(trajectory_name(c.synth.trajectory));
            }},
      CHS_DOUBLE("synth.shake_amplitude", synth.shake_amplitude),
      Entry{"synth.exposure",
            [](RunConfig& c, const std::string& v) {
              c.synth.exposure = parse_exposure_law(v);
            },
            [](const RunConfig& c) {
              return std::string(exposure_name(c.synth.exposure));
            }},
      CHS_DOUBLE("synth.dt_min", synth.dt_min),
      CHS_DOUBLE("synth.dt_max", synth.dt_max),
      CHS_DOUBLE("synth.fps", synth.fps),
      CHS_DOUBLE("synth.gamma", synth.gamma),
      CHS_DOUBLE("synth.wb_jitter", synth.wb_jitter),
      CHS_DOUBLE("synth.pose_noise_rot_deg", synth.pose_noise_rot_deg),
      CHS_DOUBLE("synth.pose_noise_trans", synth.pose_noise_trans),
      CHS_INT("synth.n_gt", synth.n_gt),
      CHS_U64("synth.seed", synth.seed),
      // ------------------------------------------------------------ train
      CHS_INT("train.iterations", train.iterations),
      CHS_DOUBLE("train.lr_mean", train.lr_mean),
      CHS_DOUBLE("train.lr_log_scale", train.lr_log_scale),
      CHS_DOUBLE("train.lr_orientation", train.lr_orientation),
      CHS_DOUBLE("train.lr_opacity", train.lr_opacity),
      CHS_DOUBLE("train.lr_color", train.lr_color),
      CHS_DOUBLE("train.lr_knots", train.lr_knots),
      CHS_DOUBLE("train.lr_log_dt", train.lr_log_dt),
      CHS_DOUBLE("train.lr_tone", train.lr_tone),
      CHS_DOUBLE("train.lr_wb", train.lr_wb),
      CHS_DOUBLE("train.mean_lr_decay", train.mean_lr_decay),
      CHS_DOUBLE("train.beta1", train.beta1),
      CHS_DOUBLE("train.beta2", train.beta2),
      CHS_DOUBLE("train.adam_eps", train.adam_eps),
      CHS_DOUBLE("train.clip_norm", train.clip_norm),
      CHS_INT("train.prune_interval", train.prune_interval),
      CHS_DOUBLE("train.prune_opacity", train.prune_opacity),
      CHS_INT("train.metrics_interval", train.metrics_interval),
      CHS_BOOL("train.optimize_exposure", train.optimize_exposure),
      CHS_BOOL("train.optimize_crf", train.optimize_crf),
      CHS_BOOL("train.optimize_trajectory", train.optimize_trajectory),
      CHS_BOOL("train.blur_model", train.blur_model),
      CHS_INT("train.n_virtual", train.n_virtual),
      Entry{"train.exposure_init",
            [](RunConfig& c, const std::string& v) {
              if (v == "random")
                c.train.exposure_init = ExposureInit::random;
              else if (v == "gt")
                c.train.exposure_init = ExposureInit::gt;
              else
                throw ConfigError(
                    "config key 'train.exposure_init': expected random or gt");
            },
            [](const RunConfig& c) {
              return std::string(
                  c.train.exposure_init == ExposureInit::random ? "random"
                                                                : "gt");
            }},
      CHS_DOUBLE("train.knots_per_pose", train.knots_per_pose),
      CHS_DOUBLE("train.init_gamma", train.init_gamma),
      CHS_DOUBLE("train.init_fit_threshold", train.init_fit_threshold),
      CHS_DOUBLE("train.dt_init_lo", train.dt_init_lo),
      CHS_DOUBLE("train.dt_init_hi", train.dt_init_hi),
      CHS_DOUBLE("train.dt_clamp_lo", train.dt_clamp_lo),
      CHS_DOUBLE("train.dt_clamp_hi", train.dt_clamp_hi),
      CHS_INT("train.n_random_points", train.n_random_points),
      CHS_U64("train.seed", train.seed),
      // ------------------------------------------------------------- loss
      CHS_DOUBLE("loss.lambda_dssim", train.loss.lambda_dssim),
      CHS_DOUBLE("loss.lambda_exposure", train.loss.lambda_exposure),
      // ---------------------------------------------------------- imaging
      CHS_INT("imaging.n_virtual", imaging.n_virtual),
      CHS_BOOL("imaging.midpoint", imaging.midpoint),
      CHS_DOUBLE("imaging.near_plane", imaging.raster.near_plane),
      CHS_DOUBLE("imaging.cov_floor", imaging.raster.cov_floor),
      CHS_DOUBLE("imaging.alpha_clamp", imaging.raster.alpha_clamp),
      CHS_DOUBLE("imaging.t_min", imaging.raster.t_min),
      CHS_DOUBLE("imaging.cull_eps", imaging.raster.cull_eps),
  };
  return entries;
}

#undef CHS_DOUBLE
#undef CHS_INT
#undef CHS_U64
#undef CHS_BOOL

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key,
                   const std::string& value) {
  for (const Entry& e : table())
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

bool apply_config_line(RunConfig& cfg, const std::string& line) {
  std::string body = line;
  const auto hash = body.find('#');
  if (hash != std::string::npos) body.erase(hash);
  body = trim(body);
  if (body.empty()) return false;
  const auto eq = body.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config line has no '=': '" + trim(line) + "'");
  apply_setting(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  return true;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      apply_config_line(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return cfg;
}

std::string resolved_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const Entry& e : table()) out << e.key << " = " << e.get(cfg) << "\n";
  return out.str();
}

}  // namespace chs
