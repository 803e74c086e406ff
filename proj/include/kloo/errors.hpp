#pragma once

#include <stdexcept>
#include <string>

namespace kloo {

// Error taxonomy mirrors the CLI exit codes: IoError -> 1, ConfigError -> 2,
// NumericalError -> 3, VerificationFailure -> 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VerificationFailure : std::runtime_error {
    explicit VerificationFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kloo
