#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sroloop {

/// Raised when a configuration value or argument violates its documented range.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by the streaming resampler when it is asked for output it cannot
/// produce from the buffered input.
class UnderrunError : public std::runtime_error {
public:
    UnderrunError(const std::string& what, std::size_t missing)
        : std::runtime_error(what), missing_(missing) {}

    std::size_t missing_samples() const noexcept { return missing_; }

private:
    std::size_t missing_;
};

/// Raised when the closed loop actuation leaves the plausible range.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sroloop
