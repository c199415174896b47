// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a plain-text "section.key = value" file covering the
// synthesis, training, imaging, and loss settings, with strict unknown-key
// rejection and a canonical full echo so every run can record exactly what
// it resolved to.
#pragma once

#include <filesystem>
#include <string>

#include "chs/datagen.hpp"
#include "chs/imaging.hpp"
#include "chs/optimizer.hpp"

namespace chs {

struct RunConfig {
  SynthSpec synth;
  TrainingConfig train;   // includes the loss.* section via train.loss
  ImagingConfig imaging;  // render-time image formation settings
};

// Applies one "section.key" assignment ("synth.n_frames", "train.lr_mean",
// "loss.lambda_dssim", "imaging.cov_floor", ...). Throws ConfigError for
// unknown keys and unparseable values, naming the offender.
void apply_setting(RunConfig& cfg, const std::string& key,
                   const std::string& value);

// Parses "key = value"; '#' starts a comment, blank lines allowed.
// Returns false for lines with no assignment.
bool apply_config_line(RunConfig& cfg, const std::string& line);

// Reads a config file line by line. Errors carry the line number.
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical echo of every setting, one "key = value" per line, doubles in
// round-trip precision. Parsing the echo reproduces the config exactly.
std::string resolved_config(const RunConfig& cfg);

}  // namespace chs
