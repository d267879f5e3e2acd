#pragma once
#include <stdexcept>
#include <string>

namespace cavlab {

// config / usage problems -> CLI exit 2
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// missing or unreadable upstream artifact -> CLI exit 3
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// numerical failure (divergence, non-finite values) -> CLI exit 4
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace cavlab
