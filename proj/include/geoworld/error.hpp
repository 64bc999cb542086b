#pragma once

#include <stdexcept>
#include <string>

namespace geoworld {

enum class ErrorCode {
  invalid_argument,
  degenerate,
  convention_mismatch,
  shape_mismatch,
  range,
  format,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::convention_mismatch: return "convention_mismatch";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::range: return "range";
    case ErrorCode::format: return "format";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Domain error raised by every module. The code is stable and machine readable;
/// the message is for humans.
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

}  // namespace geoworld
