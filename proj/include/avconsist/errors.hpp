#pragma once

#include <stdexcept>
#include <string>

namespace avc {

// Bad configuration or invalid/unreadable input files. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data fails an operation precondition (e.g. stream too short,
// degenerate embedding). CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A self-check failed. CLI exit code 1.
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace avc
