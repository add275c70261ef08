#include "pulse/errors.hpp"

namespace pulse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::UnidentifiedAtOne: return "UnidentifiedAtOne";
    case ErrorCode::UnderIdentified: return "UnderIdentified";
    case ErrorCode::InfeasibleConstraint: return "InfeasibleConstraint";
    case ErrorCode::ZeroResidual: return "ZeroResidual";
    case ErrorCode::DegenerateResidual: return "DegenerateResidual";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::NonMonotoneDetected: return "NonMonotoneDetected";
    case ErrorCode::NonStationary: return "NonStationary";
    case ErrorCode::SingularPopulationGram: return "SingularPopulationGram";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::DualInfeasible: return "DualInfeasible";
  }
  return "Unknown";
}

bool Error::is_numerical() const noexcept {
  switch (code_) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DataError:
      return false;
    default:
      return true;
  }
}

}  // namespace pulse
