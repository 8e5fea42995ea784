#pragma once

#include <stdexcept>
#include <string>

namespace ctxgen {

inline constexpr const char* kVersion = "0.1.0";

// Shape or argument misuse detected inside a kernel.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad or inconsistent input data: unreadable files, malformed records,
// vocabulary mismatches.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf or other numeric breakdown. Surfaced eagerly rather than letting
// non-finite values propagate through a training run.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ctxgen
