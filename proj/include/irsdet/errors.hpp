#pragma once

#include <stdexcept>
#include <string>

namespace irsdet {

// Invalid or inconsistent configuration (bad proportions, zero devices, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (non-finite samples, bad container magic, truncated files).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside a solver or metric (divergence, undefined metric).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// A learned detector was requested without a usable checkpoint.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace irsdet
