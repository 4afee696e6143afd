#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace photodyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a physical law (negative power, negative rate...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The two eigen-decay rates of the rate matrix are complex.
class OscillatoryRegimeError : public Error {
public:
    using Error::Error;
};

/// tau1 == tau2; the bunching amplitude is undefined.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input data (unsorted stream, missing channel...).
class DataError : public Error {
public:
    using Error::Error;
};

class NormalizationError : public Error {
public:
    using Error::Error;
};

/// Not enough statistics to form the requested estimate.
class StatisticsError : public Error {
public:
    using Error::Error;
};

/// File layout does not match the expected schema (header, kind, version).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A row could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace photodyn
