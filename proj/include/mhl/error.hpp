#pragma once

#include <stdexcept>
#include <string>

namespace mhl {

enum class ErrorCode {
  InvalidArgument = 1,
  SpaceMismatch = 2,
  OutOfRange = 3,
  NotConverged = 4,
  Internal = 5,
};

// All library failures are reported as mhl::Error; the C API maps the code
// one-to-one onto mhl_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::InvalidArgument) {
  if (!cond) fail(code, what);
}

}  // namespace mhl
