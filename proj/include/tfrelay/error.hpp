#pragma once

#include <stdexcept>
#include <string>

namespace tfrelay {

enum class ErrorCode {
  InvalidArgument,
  LengthMismatch,
  DuplicateSecret,
  MissingSecret,
  Precondition,
  Incompatible,
  LimitExceeded,
  Parse,
  Io,
};

// Every failure raised by the core library carries a code so the C API can
// map it onto a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tfrelay
