#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qjump {

enum class ErrorKind {
    NotHermitian,
    DimMismatch,
    ZeroVector,
    NegativeRate,
    StepTooLarge,
    NoJumpPossible,
    MissingTargetState,
    NegativeWEigenvalue,
    NegativeROEigenvalue,
    DivisionByZero,
    IndexOutOfRange,
    SingularMap,
    NotPSD,
    DegenerateBlock,
    InvalidRatePolicy,
    GridMismatch,
    ParseError,
    UnknownModel,
    UnknownMethod,
    BadAmplitudes,
};

std::string_view to_string(ErrorKind kind);

/// Library exception. `time` is set when the failure happened during time stepping.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          double time = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind), time_(time) {}

    ErrorKind kind() const noexcept { return kind_; }
    double time() const noexcept { return time_; }
    bool has_time() const noexcept { return !std::isnan(time_); }

private:
    ErrorKind kind_;
    double time_;
};

}  // namespace qjump
