#pragma once

#include <stdexcept>
#include <string>

namespace rnnmpc {

/// Input outside the domain of a model quantity (e.g. non-positive temperature).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The fixed-step integrator produced a non-finite state.
class IntegratorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix/vector dimensions disagree with the network layout.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or missing dataset / model artifact.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration violation; `path` is the JSON path of the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace rnnmpc
