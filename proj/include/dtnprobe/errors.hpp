#pragma once

#include <stdexcept>
#include <string>

namespace dtnprobe {

/// Invalid geometry / parameters / configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A solver failed to converge. Carries a human-readable diagnostic
/// (residual history, iteration counts). The CLI maps this to exit code 3.
class SolveError : public std::runtime_error {
public:
    explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dtnprobe
