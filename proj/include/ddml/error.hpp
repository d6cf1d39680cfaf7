#pragma once

#include <stdexcept>
#include <string>

namespace ddml {

/// Error categories; the CLI maps each to a distinct exit code.
enum class ErrorKind { Config, Data, Degenerate, Convergence };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Raised when an estimator's denominator or a regressor's variance collapses.
class DegenerateError : public Error {
public:
    explicit DegenerateError(const std::string& what) : Error(ErrorKind::Degenerate, what) {}
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, long iterations)
        : Error(ErrorKind::Convergence, what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}
    struct Verbatim {};
    ConvergenceError(const std::string& what, long iterations, Verbatim)
        : Error(ErrorKind::Convergence, what), iterations_(iterations) {}
    long iterations() const noexcept { return iterations_; }

private:
    long iterations_;
};

/// Rethrows `e` as the same error type with `context` prepended.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
    const std::string msg = context + ": " + e.what();
    switch (e.kind()) {
        case ErrorKind::Config: throw ConfigError(msg);
        case ErrorKind::Data: throw DataError(msg);
        case ErrorKind::Degenerate: throw DegenerateError(msg);
        case ErrorKind::Convergence: {
            const auto* c = dynamic_cast<const ConvergenceError*>(&e);
            throw ConvergenceError(msg, c ? c->iterations() : 0, ConvergenceError::Verbatim{});
        }
    }
    throw Error(e.kind(), msg);
}

}  // namespace ddml
