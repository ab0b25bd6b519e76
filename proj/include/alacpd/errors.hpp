#pragma once

#include <stdexcept>
#include <string>

namespace alacpd {

// Shape or dimensionality mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite value produced or consumed during training.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or generator specs.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input file. The message names the offending field path.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid caller-supplied data (empty series, out-of-range indices, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace alacpd
