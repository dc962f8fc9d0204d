#pragma once

#include <stdexcept>
#include <string>

namespace sdr {

enum class ErrorCode {
  invalid_argument = 1,
  singular_geometry,
  degenerate_frame,
  integration,
  rank_deficient,
  ill_conditioned_laplace,
  bad_initialization,
  io,
  parse,
  study_aborted,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by development when the geometry fails partway along a path.
class IntegrationError : public Error {
 public:
  IntegrationError(int step, const std::string& what)
      : Error(ErrorCode::integration, "step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const char* what) {
  if (!cond) fail(ErrorCode::invalid_argument, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::invalid_argument, what);
}

}  // namespace sdr
