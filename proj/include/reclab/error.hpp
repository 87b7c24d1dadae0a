#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reclab {

enum class ErrorCode {
    SingularOrbit,
    EmptySample,
    ZeroBallMeasure,
    NonPositiveRoof,
    NonIntegrableRoof,
    DirtyFlowBox,
    HorizonExceeded,
    TruncatedRecord,
    ProfileRangeExceeded,
    DomainError,
    UnknownReference,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::SingularOrbit: return "SingularOrbit";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::ZeroBallMeasure: return "ZeroBallMeasure";
    case ErrorCode::NonPositiveRoof: return "NonPositiveRoof";
    case ErrorCode::NonIntegrableRoof: return "NonIntegrableRoof";
    case ErrorCode::DirtyFlowBox: return "DirtyFlowBox";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::ProfileRangeExceeded: return "ProfileRangeExceeded";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::UnknownReference: return "UnknownReference";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace reclab
