#pragma once

#include <stdexcept>
#include <string>

namespace speckle {

enum class ErrorCode {
  MissingFrame,
  DimensionMismatch,
  UnsupportedBitDepth,
  IoError,
  PatchOutOfBounds,
  EigSolveFailure,
  EmptySystem,
  ConvergenceFailure,
  RankDeficient,
  InvalidScene,
  UnknownScenario,
  ConstantSignal,
  NoPropagationDetected,
  InvalidConfig,
};

const char* error_code_name(ErrorCode code);

/// All library failures are thrown as Error; code() identifies the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace speckle
