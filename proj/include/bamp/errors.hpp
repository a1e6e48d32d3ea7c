#pragma once

#include <stdexcept>
#include <string>

namespace bamp {

/// Malformed or unreadable input: bad file layout, invalid arguments,
/// configuration outside documented ranges. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Embedding, plan, checkpoint or results file that does not parse.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

/// Numerical failure during a computation (divergence, singular solve).
/// The CLI maps these to exit code 1.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bamp
