#pragma once

#include <stdexcept>

namespace hglmm::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3, convergence_error = 4 };

/// Malformed or inconsistent configuration, bad flags, stale artifacts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input files that cannot be read or do not fit the model.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hglmm::cli
