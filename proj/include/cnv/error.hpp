#pragma once

#include <stdexcept>
#include <string>

namespace cnv {

/// Invalid input: bad family tables, malformed configs, out-of-range parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A run that was started with valid input but could not finish
/// (event cap hit, size guard exceeded).
class RuntimeLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cnv
