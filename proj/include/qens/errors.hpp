#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Problems with input data (CLI exit code 3). Most errors below derive from it.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class MissingWeekError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientHistoryError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite or otherwise unusable numeric input to a scoring rule.
class InputError : public DataError {
public:
    using DataError::DataError;
};

/// Raised when no available component carries positive weight.
class NoMassError : public DataError {
public:
    using DataError::DataError;
};

class InfeasibleError : public DataError {
public:
    using DataError::DataError;
};

/// Tied quantile values where strictly increasing values are required.
class DegenerateError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace qens
