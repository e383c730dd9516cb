#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqal {

enum class ErrorCode {
    InvalidArgument,
    NotPositiveDefinite,
    InvalidProbability,
    DegenerateCovariance,
    SingularInformation,
    OneClassOnly,
    IllConditioned,
    NoSelectedVariables,
    ZeroSupport,
    EmptyUncertaintySet,
    CannotBalance,
    PoolExhausted,
    ParseError,
    NonBinaryLabel,
    InsufficientClass,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported as an Error carrying
/// a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace seqal
