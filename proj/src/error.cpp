#include "lrvb/error.hpp"

namespace lrvb {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::Domain: return "DomainError";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MaxSweepsExceeded: return "MaxSweepsExceeded";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
    case ErrorCode::LabelSwitchDetected: return "LabelSwitchDetected";
    case ErrorCode::EssTooLow: return "EssTooLow";
    case ErrorCode::Numerical: return "NumericalError";
    case ErrorCode::GateFailed: return "GateFailed";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace lrvb
