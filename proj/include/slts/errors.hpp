#pragma once

#include <stdexcept>
#include <string>

namespace slts {

// Base class for all library errors. Specific conditions get their own type
// so callers (and tests) can catch them individually.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SLTS_DEFINE_ERROR(Name)                                        \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    };

// time_scale
SLTS_DEFINE_ERROR(OverlapError)
SLTS_DEFINE_ERROR(DegenerateError)
SLTS_DEFINE_ERROR(NonFiniteError)
SLTS_DEFINE_ERROR(NotInScaleError)
SLTS_DEFINE_ERROR(EmptyCoreError)
SLTS_DEFINE_ERROR(IndexError)

// potential
SLTS_DEFINE_ERROR(OutOfRangeError)
SLTS_DEFINE_ERROR(ShapeMismatchError)

// transfer / forward
SLTS_DEFINE_ERROR(MissingPointValueError)
SLTS_DEFINE_ERROR(IntegrationError)
SLTS_DEFINE_ERROR(RootCountError)
SLTS_DEFINE_ERROR(ToleranceError)
SLTS_DEFINE_ERROR(NonPositiveWeightError)
SLTS_DEFINE_ERROR(ExtrapolationDivergenceError)
SLTS_DEFINE_ERROR(CommensurabilityError)
SLTS_DEFINE_ERROR(AssignmentError)

// inverse
SLTS_DEFINE_ERROR(GridError)
SLTS_DEFINE_ERROR(DataLengthError)
SLTS_DEFINE_ERROR(ModelMismatchError)
SLTS_DEFINE_ERROR(SingularSystemError)
SLTS_DEFINE_ERROR(AllNearZeroError)
SLTS_DEFINE_ERROR(FitResidualError)
SLTS_DEFINE_ERROR(BranchError)
SLTS_DEFINE_ERROR(PoleExtractionError)
SLTS_DEFINE_ERROR(CancellationError)
SLTS_DEFINE_ERROR(IterationLimitError)

// cli
SLTS_DEFINE_ERROR(ConfigError)
SLTS_DEFINE_ERROR(ComputeError)

#undef SLTS_DEFINE_ERROR

} // namespace slts
