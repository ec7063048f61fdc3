#pragma once

#include <stdexcept>
#include <string>

namespace cra {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform to an operation's contract.
struct ShapeError : Error {
    using Error::Error;
};

// A value-level contract was violated (labels not one-hot, slot mismatch,
// temperature <= 0, out-of-range index, ...).
struct ValueError : Error {
    using Error::Error;
};

// Non-finite values appeared during computation (divergence, bad input).
struct NumericalError : Error {
    using Error::Error;
};

// The configuration file is malformed or inconsistent.
struct ConfigError : Error {
    using Error::Error;
};

// A command was invoked before the artifact it depends on exists.
struct PrerequisiteError : Error {
    using Error::Error;
};

// Filesystem / serialization failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace cra
