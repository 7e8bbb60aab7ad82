#pragma once

#include <stdexcept>
#include <string>

namespace bbridge {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: wrong shapes, malformed records, infeasible requests.
// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A numerical computation could not be carried out (non-PD matrix,
// singular estimate, divergence). The CLI maps these to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

#define BBRIDGE_DEFINE_ERROR(Name, Base) \
  class Name : public Base {             \
   public:                               \
    using Base::Base;                    \
  };

BBRIDGE_DEFINE_ERROR(DomainError, ValidationError)
BBRIDGE_DEFINE_ERROR(DimensionMismatch, ValidationError)
BBRIDGE_DEFINE_ERROR(LengthMismatch, ValidationError)
BBRIDGE_DEFINE_ERROR(InsufficientData, ValidationError)
BBRIDGE_DEFINE_ERROR(EmptyBatch, ValidationError)
BBRIDGE_DEFINE_ERROR(InvalidTriplet, ValidationError)
BBRIDGE_DEFINE_ERROR(TripletInfeasible, ValidationError)
BBRIDGE_DEFINE_ERROR(NoNontrivialPermutation, ValidationError)
BBRIDGE_DEFINE_ERROR(InfeasibleWindows, ValidationError)
BBRIDGE_DEFINE_ERROR(EmptySet, ValidationError)
BBRIDGE_DEFINE_ERROR(DegenerateLabels, ValidationError)
BBRIDGE_DEFINE_ERROR(FormatError, ValidationError)

BBRIDGE_DEFINE_ERROR(NotPositiveDefinite, NumericalError)
BBRIDGE_DEFINE_ERROR(SingularEstimate, NumericalError)
BBRIDGE_DEFINE_ERROR(DegenerateInput, NumericalError)
BBRIDGE_DEFINE_ERROR(DegenerateVariance, NumericalError)
BBRIDGE_DEFINE_ERROR(Divergence, NumericalError)

#undef BBRIDGE_DEFINE_ERROR

}  // namespace bbridge
