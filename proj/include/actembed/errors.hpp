#pragma once

#include <stdexcept>
#include <string>

namespace actembed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite parameter encountered during training (CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or mutually inconsistent inputs (CLI exit code 4).
class InputError : public Error {
public:
    using Error::Error;
};

/// Model file could not be decoded.
class FormatError : public InputError {
public:
    using InputError::InputError;
};

}  // namespace actembed
