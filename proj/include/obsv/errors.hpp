#pragma once

#include <stdexcept>
#include <string>

namespace obsv {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The integrator produced a non-finite state. Carries the first bad node.
struct IntegrationDiverged : Error {
    int node;
    IntegrationDiverged(int node_, const std::string& msg) : Error(msg), node(node_) {}
};

/// A symmetric solve failed even after diagonal jitter. Usually means the
/// observability Gramian is (numerically) singular: the excitation condition
/// is violated or the observation window is too small for the grid.
struct GramianSingular : Error {
    using Error::Error;
};

/// The contraction-time search ran out of resolvable window widths.
struct GridTooCoarse : Error {
    using Error::Error;
};

/// Expression syntax error; offset is a byte position into the source text.
struct ParseError : Error {
    std::size_t offset;
    ParseError(std::size_t offset_, const std::string& msg) : Error(msg), offset(offset_) {}
};

/// Expression evaluation error (division by zero, domain error, unbound variable).
struct EvalError : Error {
    using Error::Error;
};

/// Scenario file problem; line <= 0 means "not tied to a specific line".
struct ConfigError : Error {
    int line;
    std::string field;
    ConfigError(const std::string& msg, int line_ = 0, std::string field_ = {})
        : Error(msg), line(line_), field(std::move(field_)) {}
};

/// Operation requires structure the model does not carry (e.g. an H2 check
/// on a model that was not built from a triangular spec).
struct UnsupportedCheck : Error {
    using Error::Error;
};

}  // namespace obsv
