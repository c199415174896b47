// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace chs {

// Base class for all chsplat errors. Subclasses map onto CLI exit codes:
// ConfigError -> 2, IoError/data problems -> 3, numeric failures -> 4.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (bad sizes, non-finite inputs, out-of-range knobs).
class DomainError : public Error {
public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Rotation too close to the log-map cut locus (angle >= pi - 1e-6).
class AngleNearPi : public Error {
public:
  explicit AngleNearPi(const std::string& msg) : Error(msg) {}
};

// Spline evaluated outside [t0 + tau, t0 + (K-2)*tau).
class OutOfDomain : public Error {
public:
  explicit OutOfDomain(const std::string& msg) : Error(msg) {}
};

// Input data that cannot support the requested operation
// (too few knots/poses/samples, constant series, zero-variance images, ...).
class DegenerateInput : public Error {
public:
  explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

// Primitive center projects behind (or onto) the near plane.
class BehindCamera : public Error {
public:
  explicit BehindCamera(const std::string& msg) : Error(msg) {}
};

// Malformed config file, unknown keys, or invalid CLI arguments.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File system / decode / encode failures and malformed data files.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Training loss became NaN/Inf; state is left at the last finite iterate.
class NonFiniteLoss : public Error {
public:
  explicit NonFiniteLoss(const std::string& msg) : Error(msg) {}
};

// Timestamp matching between trajectories found too few pairs.
class InsufficientOverlap : public Error {
public:
  explicit InsufficientOverlap(const std::string& msg) : Error(msg) {}
};

}  // namespace chs
