#pragma once
#include <stdexcept>

namespace doa {

// Bad arguments, incompatible dimensions, malformed inputs.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A sampling spec that cannot be satisfied within the retry budget.
struct InfeasibleSpec : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Read/write failures and corrupt binary containers.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace doa
