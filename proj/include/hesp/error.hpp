#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hesp {

enum class ErrorCode {
    // input validation
    InvalidArgument,
    MissingColumn,
    UnbalancedPanel,
    TimeVaryingTreatment,
    TimeVaryingCovariate,
    MissingReferencePeriod,
    NonConsecutiveTimes,
    NonBinaryTreatment,
    DuplicateCell,
    NoOverlap,
    TooFewKnots,
    NonMonotoneKnots,
    DimensionMismatch,
    OutOfDomain,
    GridMismatch,
    EmptyList,
    EmptyPreAnticipationWindow,
    InfSideUnsupported,
    NoNeverTreated,
    EmptyCommonWindow,
    EmptyGroup,
    // numerical failures
    NoTreatmentVariation,
    RankDeficientCovariates,
    ZeroResidualTreatment,
    SingularDesign,
    DegenerateVariance,
    NonPSDCovariance,
    NonPSDKernel,
    DegenerateGrid,
    NoRoot,
    DegenerateDraw,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// True for failures that stem from the numbers rather than from malformed input.
[[nodiscard]] bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] bool numerical() const noexcept { return is_numerical(code_); }

private:
    ErrorCode code_;
};

}  // namespace hesp
