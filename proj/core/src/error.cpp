#include "p2c/error.hpp"

namespace p2c {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid_input";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kStaleIndex: return "stale_index";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace p2c
