#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfopt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed UDF source. `line` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A flow document or a data set violates a structural rule.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Data sets compared under different layouts.
class LayoutMismatch : public Error {
public:
    using Error::Error;
};

/// A single UDF invocation failed (type error, bad index, step budget...).
class InvocationError : public Error {
public:
    using Error::Error;
};

/// Precondition of a plan transformation does not hold.
class TransformError : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    BudgetExceeded(const std::string& msg, std::size_t partial)
        : Error(msg), partial_(partial) {}
    std::size_t partial_count() const noexcept { return partial_; }

private:
    std::size_t partial_;
};

} // namespace dfopt
