#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pulse {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  DataError,
  SingularGram,
  UnidentifiedAtOne,
  UnderIdentified,
  InfeasibleConstraint,
  ZeroResidual,
  DegenerateResidual,
  OutOfDomain,
  NonMonotoneDetected,
  NonStationary,
  SingularPopulationGram,
  DivisionByZero,
  DualInfeasible,
};

std::string_view to_string(ErrorCode code);

/// Every library failure carries one of the codes above so callers (the C
/// API in particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Numerical failures (as opposed to bad input).
  bool is_numerical() const noexcept;

 private:
  ErrorCode code_;
};

}  // namespace pulse
