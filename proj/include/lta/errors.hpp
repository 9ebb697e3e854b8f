#pragma once

#include <stdexcept>
#include <string>

namespace lta {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated file content (tensor files, manifests, checkpoints).
struct FormatError : Error {
    using Error::Error;
};

// Invalid configuration value; message names the offending key.
struct ConfigError : Error {
    using Error::Error;
};

// Tensor shape does not match what an operation requires.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// Head/tail partition cannot be formed (empty side, bad cover).
struct PartitionError : Error {
    using Error::Error;
};

// Training aborted (non-finite loss or divergence).
struct TrainingError : Error {
    using Error::Error;
};

// Metric is undefined for the given inputs (e.g. no class has positives).
struct MetricError : Error {
    using Error::Error;
};

// Fusion pairing cannot proceed (empty sample set or neighbor pool).
struct FusionError : Error {
    using Error::Error;
};

}  // namespace lta
