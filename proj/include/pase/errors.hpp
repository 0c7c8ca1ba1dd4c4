#pragma once

#include <stdexcept>
#include <string>

namespace pase {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid parameters or sizes that make the requested run impossible.
struct ConfigError : Error {
  using Error::Error;
};

// Bad runtime inputs: dimension mismatches, out-of-range labels, empty sets.
struct InputError : Error {
  using Error::Error;
};

// Malformed files: CSV, IDX, JSON manifests, binary matrices.
struct FormatError : Error {
  using Error::Error;
};

// CLI misuse: unknown format names, missing arguments.
struct UsageError : Error {
  using Error::Error;
};

// Wraps any failure with the pipeline stage it happened in.
struct StageError : Error {
  std::string stage;
  StageError(const std::string& stage_name, const std::string& message)
      : Error("[stage:" + stage_name + "] " + message), stage(stage_name) {}
};

}  // namespace pase
