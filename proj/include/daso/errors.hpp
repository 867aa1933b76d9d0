#pragma once

#include <stdexcept>
#include <string>

namespace daso {

// Invalid experiment or cluster configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Vectors of different lengths met in one operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A synchronization primitive was called out of order (double completion,
// start while pending, wrong group size, ...).
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace daso
