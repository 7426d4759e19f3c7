#pragma once

#include <stdexcept>
#include <string>

namespace cream {

// Bad user input: malformed config, out-of-range argument, invalid shape.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent or missing data inside otherwise well-formed structures
// (e.g. a candidate batch lacking the log-probs a reward mode needs).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during optimization (non-finite loss or parameters).
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cream
