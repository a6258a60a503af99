#include "hesp/error.hpp"

namespace hesp {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
        case ErrorCode::TimeVaryingTreatment: return "TimeVaryingTreatment";
        case ErrorCode::TimeVaryingCovariate: return "TimeVaryingCovariate";
        case ErrorCode::MissingReferencePeriod: return "MissingReferencePeriod";
        case ErrorCode::NonConsecutiveTimes: return "NonConsecutiveTimes";
        case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
        case ErrorCode::DuplicateCell: return "DuplicateCell";
        case ErrorCode::NoOverlap: return "NoOverlap";
        case ErrorCode::TooFewKnots: return "TooFewKnots";
        case ErrorCode::NonMonotoneKnots: return "NonMonotoneKnots";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::EmptyPreAnticipationWindow: return "EmptyPreAnticipationWindow";
        case ErrorCode::InfSideUnsupported: return "InfSideUnsupported";
        case ErrorCode::NoNeverTreated: return "NoNeverTreated";
        case ErrorCode::EmptyCommonWindow: return "EmptyCommonWindow";
        case ErrorCode::EmptyGroup: return "EmptyGroup";
        case ErrorCode::NoTreatmentVariation: return "NoTreatmentVariation";
        case ErrorCode::RankDeficientCovariates: return "RankDeficientCovariates";
        case ErrorCode::ZeroResidualTreatment: return "ZeroResidualTreatment";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::NonPSDCovariance: return "NonPSDCovariance";
        case ErrorCode::NonPSDKernel: return "NonPSDKernel";
        case ErrorCode::DegenerateGrid: return "DegenerateGrid";
        case ErrorCode::NoRoot: return "NoRoot";
        case ErrorCode::DegenerateDraw: return "DegenerateDraw";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
    return code >= ErrorCode::NoTreatmentVariation;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace hesp
