#pragma once

#include <stdexcept>
#include <string>

namespace probekit {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PROBEKIT_DEFINE_ERROR(Name)       \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

PROBEKIT_DEFINE_ERROR(FormatError)      // missing or malformed file
PROBEKIT_DEFINE_ERROR(ShapeError)       // dimension disagreement
PROBEKIT_DEFINE_ERROR(DataError)        // NaN/Inf or out-of-domain values
PROBEKIT_DEFINE_ERROR(IoError)
PROBEKIT_DEFINE_ERROR(ValidationError)  // invariant violated before a write
PROBEKIT_DEFINE_ERROR(ArgumentError)
PROBEKIT_DEFINE_ERROR(SingularError)
PROBEKIT_DEFINE_ERROR(TrainError)
PROBEKIT_DEFINE_ERROR(EvalError)
PROBEKIT_DEFINE_ERROR(ParseError)
PROBEKIT_DEFINE_ERROR(PlanError)
PROBEKIT_DEFINE_ERROR(ScoreError)

#undef PROBEKIT_DEFINE_ERROR

}  // namespace probekit
