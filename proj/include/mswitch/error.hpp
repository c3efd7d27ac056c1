#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mswitch {

/// Every failure the library reports is one of these kinds. The CLI maps
/// kinds onto exit statuses, tests match on them.
enum class ErrorKind {
    Parse,
    Config,
    // model
    NonFreeLoopViolation,
    NegativeCost,
    TooManyModes,
    DiscountTooSmall,
    // sde
    NonFiniteState,
    CheckpointOffGrid,
    // grid
    BadBounds,
    DimensionUnsupported,
    MonotonicityUnachievable,
    // qvi
    InnerDiverged,
    EnvelopeOrderViolated,
    PenaltyStalled,
    MaxOuterIterations,
    MonotonicityBroken,
    // strategy
    CoupledGeneratorUnsupported,
    MaxSwitchesExceeded,
    // verify
    PrerequisiteOrderViolated,
    NonConvergentRefinement,
    // io / cli
    HashMismatch,
    Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::NonFreeLoopViolation: return "NonFreeLoopViolation";
    case ErrorKind::NegativeCost: return "NegativeCost";
    case ErrorKind::TooManyModes: return "TooManyModes";
    case ErrorKind::DiscountTooSmall: return "DiscountTooSmall";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::CheckpointOffGrid: return "CheckpointOffGrid";
    case ErrorKind::BadBounds: return "BadBounds";
    case ErrorKind::DimensionUnsupported: return "DimensionUnsupported";
    case ErrorKind::MonotonicityUnachievable: return "MonotonicityUnachievable";
    case ErrorKind::InnerDiverged: return "InnerDiverged";
    case ErrorKind::EnvelopeOrderViolated: return "EnvelopeOrderViolated";
    case ErrorKind::PenaltyStalled: return "PenaltyStalled";
    case ErrorKind::MaxOuterIterations: return "MaxOuterIterations";
    case ErrorKind::MonotonicityBroken: return "MonotonicityBroken";
    case ErrorKind::CoupledGeneratorUnsupported: return "CoupledGeneratorUnsupported";
    case ErrorKind::MaxSwitchesExceeded: return "MaxSwitchesExceeded";
    case ErrorKind::PrerequisiteOrderViolated: return "PrerequisiteOrderViolated";
    case ErrorKind::NonConvergentRefinement: return "NonConvergentRefinement";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::Io: return "IoError";
    }
    return "UnknownError";
}

} // namespace mswitch
