#pragma once

#include <stdexcept>
#include <string>

namespace i4d {

/// Rejected argument or malformed input data. CLI maps this to exit code 2.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-level failure: missing file, truncated payload, bad magic/version.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization produced a NaN/Inf loss. CLI maps this to exit code 3.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace i4d
