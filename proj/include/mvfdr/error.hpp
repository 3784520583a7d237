#pragma once

#include <stdexcept>
#include <string>

namespace mvfdr {

/// Argument outside the mathematical domain of a function.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A series hit its term budget before reaching the requested tolerance.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parameters that are individually valid but inconsistent with each other,
/// e.g. a volume mode that cannot evaluate the requested region.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A configuration that violates a structural invariant (e.g. prod(c) != 1).
struct InvariantError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// The procedure cannot be built from the given inputs, e.g. a constant
/// likelihood ratio with no signal to rank by.
struct DegenerateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed user input: unreadable files, bad CSV cells, missing config keys.
struct InputError : std::runtime_error { using std::runtime_error::runtime_error; };

namespace detail {

[[noreturn]] inline void domain_fail(const std::string& what) { throw DomainError(what); }

}  // namespace detail
}  // namespace mvfdr
