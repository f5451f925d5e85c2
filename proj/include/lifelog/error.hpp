#pragma once

#include <stdexcept>
#include <string>

namespace lifelog {

// Bad input: malformed files, invalid arguments, violated preconditions.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Environment or numerical failure (unreadable file, non-finite loss).
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lifelog
