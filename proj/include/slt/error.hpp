#pragma once

#include <stdexcept>
#include <string>

namespace slt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/size disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// A call violated an API precondition (non-scalar loss, missing grad, ...).
struct ContractError : Error {
    using Error::Error;
};

// A backward rule produced gradients of the wrong shape or count.
struct GradientError : Error {
    using Error::Error;
};

// A mask or ticket would retain zero entries.
struct DegenerateMaskError : Error {
    using Error::Error;
};

// Out-of-range or malformed index set.
struct IndexError : Error {
    using Error::Error;
};

// Invalid experiment configuration; message carries the field path.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file (bad magic, truncation, CRC mismatch).
struct FormatError : Error {
    using Error::Error;
};

// NaN/Inf escaped from a numeric operation.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace slt
