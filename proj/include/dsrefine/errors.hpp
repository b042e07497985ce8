#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsrefine {

// Caller passed something outside an operation's domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedArchitecture : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values showed up in data, gradients or parameters.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

enum class ParseErrorKind { BadMagic, VersionMismatch, Truncated, DimOverflow, BadValue };

const char* to_string(ParseErrorKind kind);

// Binary file decoding failure; offset is the byte position where decoding stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail);

    ParseErrorKind kind() const noexcept { return kind_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    ParseErrorKind kind_;
    std::size_t offset_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dsrefine
