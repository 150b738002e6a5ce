#pragma once

#include <stdexcept>
#include <string>

namespace lmv {

/// Out-of-range ids, shape mismatches and other caller mistakes.
struct argument_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (CSV rows, bundles, checkpoints).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other numeric breakdown during training.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lmv
