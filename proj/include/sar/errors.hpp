#pragma once

#include <stdexcept>
#include <string>

namespace sar {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad run configuration (unknown key, invalid value, inconsistent sections).
struct ConfigError : Error {
    using Error::Error;
};

/// Unreadable, malformed, or mismatched input data (files, corpora, labels).
struct DataError : Error {
    using Error::Error;
};

/// Invalid argument to an operation (out-of-range value, degenerate input).
struct ArgumentError : Error {
    using Error::Error;
};

/// Tensor/array shape disagreement between caller and callee.
struct ShapeError : Error {
    using Error::Error;
};

/// Corrupt or incompatible checkpoint file.
struct CheckpointError : Error {
    using Error::Error;
};

/// Non-finite loss or other numerical breakdown during training.
struct NumericalError : Error {
    using Error::Error;
};

} // namespace sar
