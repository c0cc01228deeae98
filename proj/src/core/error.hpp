#pragma once

#include <stdexcept>
#include <string>

namespace postcorr {

enum class ErrorCode {
  Dimension,
  Validation,
  Domain,
  Parse,
  Structural,
  Configuration,
  Alignment,
  Conflict,
  NotFound,
  Transport,
  Internal,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace postcorr
