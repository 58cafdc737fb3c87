#pragma once

#include <stdexcept>
#include <string>

namespace lrvb {

// Numeric values are part of the C API (see lrvb.h) and must not change.
enum class ErrorCode : int {
  Ok = 0,
  Domain = 1,
  NoConvergence = 2,
  LayoutMismatch = 3,
  DimensionMismatch = 4,
  SingularSystem = 5,
  Config = 6,
  Io = 7,
  MaxSweepsExceeded = 8,
  TooFewDraws = 9,
  LabelSwitchDetected = 10,
  EssTooLow = 11,
  Numerical = 12,
  GateFailed = 13,
  DimensionTooLarge = 14,
  InvalidArgument = 15,
  Internal = 99,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define LRVB_DEFINE_ERROR(Name, Code)                        \
  class Name : public Error {                                \
   public:                                                   \
    explicit Name(const std::string& what)                   \
        : Error(ErrorCode::Code, what) {}                    \
  };

LRVB_DEFINE_ERROR(DomainError, Domain)
LRVB_DEFINE_ERROR(NoConvergence, NoConvergence)
LRVB_DEFINE_ERROR(LayoutMismatch, LayoutMismatch)
LRVB_DEFINE_ERROR(DimensionMismatch, DimensionMismatch)
LRVB_DEFINE_ERROR(SingularSystem, SingularSystem)
LRVB_DEFINE_ERROR(ConfigError, Config)
LRVB_DEFINE_ERROR(IoError, Io)
LRVB_DEFINE_ERROR(TooFewDraws, TooFewDraws)
LRVB_DEFINE_ERROR(LabelSwitchDetected, LabelSwitchDetected)
LRVB_DEFINE_ERROR(EssTooLow, EssTooLow)
LRVB_DEFINE_ERROR(NumericalError, Numerical)
LRVB_DEFINE_ERROR(GateFailed, GateFailed)
LRVB_DEFINE_ERROR(DimensionTooLarge, DimensionTooLarge)

#undef LRVB_DEFINE_ERROR

}  // namespace lrvb
