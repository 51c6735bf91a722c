#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tdop {

/// Coarse failure classes. The CLI maps these one-to-one onto exit codes.
enum class FailureClass {
    validation,   // malformed input or violated precondition (exit 2)
    numerical,    // ODE failure, domain error, diagnostic refusal (exit 3)
    consistency,  // identity residual above its bound (exit 4)
};

class Error : public std::runtime_error {
public:
    Error(FailureClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
    FailureClass failure_class() const noexcept { return class_; }

private:
    FailureClass class_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(FailureClass::validation, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(FailureClass::numerical, what) {}
};

class ConsistencyError : public Error {
public:
    explicit ConsistencyError(const std::string& what) : Error(FailureClass::consistency, what) {}
};

/// Syntax error or unknown identifier; `position` is a 0-based byte offset.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t position, const std::string& message)
        : ValidationError("at position " + std::to_string(position) + ": " + message),
          position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Evaluation left the real domain (ln of non-positive, sqrt of negative, x/0, overflow).
class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateMetricError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BaseMismatchError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParameterRangeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class OdeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NullObserverError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A linear transport that does not preserve the metric; the energy identities do not apply.
class InconsistentTransportError : public ConsistencyError {
public:
    using ConsistencyError::ConsistencyError;
};

}  // namespace tdop
