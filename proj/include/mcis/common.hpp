#pragma once

#include <stdexcept>
#include <string>

namespace mcis {

// Shape or configuration contract violated by the caller.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value reached a computation that requires finite inputs.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// BFS target unreachable from the start cell.
struct NoPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mcis
