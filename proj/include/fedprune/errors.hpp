#pragma once

#include <stdexcept>
#include <string>

namespace fedprune {

// Contract violations (bad shapes, out-of-range labels, mismatched operands).
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values produced by a public operation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called in the wrong order (e.g. backward without a recorded forward).
struct StateError : std::logic_error {
    explicit StateError(const std::string& msg) : std::logic_error(msg) {}
};

// Invalid run configuration or dataset parameters.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated input files.
struct IngestError : std::runtime_error {
    explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Aggregation over structurally different models; unreachable unless input is corrupted.
struct AggregationError : std::runtime_error {
    explicit AggregationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal consistency violations that indicate a bug, not a user error.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace fedprune
