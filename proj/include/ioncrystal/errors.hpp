#pragma once

#include <stdexcept>
#include <string>

namespace ioncrystal {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Requested trap parameters put at least one axis outside the Mathieu
/// stability region (or a quantity that needs a stable axis was asked for
/// on an unstable one).
class UnstableAxisError : public Error {
public:
    using Error::Error;
};

/// An iterative solver (Newton, trust region, fit) failed to converge
/// within its iteration budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A mode could not be tagged unambiguously; the message lists the
/// candidate modes and their overlaps.
class AmbiguousTagError : public Error {
public:
    using Error::Error;
};

/// The monodromy matrix has an eigenvalue off the unit circle: the crystal
/// is dynamically unstable at these parameters.
class DynamicalInstabilityError : public Error {
public:
    using Error::Error;
};

/// A computed invariant (symplecticity, unit determinant) drifted beyond
/// its tolerance, pointing at integrator accuracy rather than physics.
class IntegratorAccuracyError : public Error {
public:
    using Error::Error;
};

/// Invalid argument values (domain violations, malformed input data).
class DomainError : public Error {
public:
    using Error::Error;
};

} // namespace ioncrystal
