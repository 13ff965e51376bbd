#pragma once

#include <stdexcept>
#include <string>

namespace gaslt {

// Shape/dimension violations in tensor ops. Messages name the op and the
// offending extents.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation preconditions (non-scalar loss, all-masked row,
// zero-norm embedding, out-of-range position, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (model/spec/train config validation).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O and parse failures (bad magic, version, truncation, malformed text).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gaslt
