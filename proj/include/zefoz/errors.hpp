#pragma once

#include <stdexcept>
#include <string>

namespace zefoz {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an operation requires isolated levels but hits a degenerate
// cluster (message names the cluster indices).
class DegeneracyError : public Error {
public:
    explicit DegeneracyError(const std::string& msg) : Error(msg) {}
};

// Eigenstate tracking across field steps became ambiguous (level crossing
// inside a finite-difference stencil).
class TrackingError : public Error {
public:
    explicit TrackingError(const std::string& msg) : Error(msg) {}
};

// Configuration file problems; message carries the JSON path of the offender.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace zefoz
