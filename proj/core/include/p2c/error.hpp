#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace p2c {

enum class ErrorCode {
  kInvalidInput,   // malformed or contract-violating caller input
  kDegenerate,     // valid input that admits no meaningful result
  kNotFound,
  kConflict,
  kStaleIndex,
  kNonFinite,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Domain error raised by every p2c module. The code lets front-ends map
/// failures onto exit codes and HTTP statuses without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::kInvalidInput, message);
}

}  // namespace p2c
