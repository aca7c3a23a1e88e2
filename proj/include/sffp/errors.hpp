#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sffp {

/// Operand dimensions disagree with what an operation expects.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidLengthError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by readers; `line()` is 1-based and counts the header row.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class OrderingError : public ParseError {
public:
    using ParseError::ParseError;
};

class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A forward or backward pass produced NaN or Inf.
class DivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateAffineError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class UndefinedEntropyError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sffp
