#pragma once

#include <stdexcept>
#include <string>

namespace hmrk {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kInvalidArgument = 1,
  kShapeMismatch = 2,
  kNonFinite = 3,
  kIo = 4,
  kCorrupt = 5,
  kVersion = 6,
  kInvalidModel = 7,
  kInvalidConfig = 8,
  kState = 9,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace hmrk
