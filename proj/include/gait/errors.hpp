#pragma once

#include <stdexcept>
#include <string>

namespace gait {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid layer/graph/pipeline configuration (bad shapes, hyperparameters).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// File or format problems (missing frames, bad magic, checksum mismatch).
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// NaN/Inf escaped a numeric kernel.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace gait
