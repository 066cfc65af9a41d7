#pragma once

#include <stdexcept>
#include <string>

namespace pcx {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement (inner dimensions, empty inputs, ...).
struct DimensionError : Error {
    using Error::Error;
};

// A precondition stated by an operation's contract was violated.
struct ContractError : Error {
    using Error::Error;
};

// Out-of-range element or label access.
struct IndexError : Error {
    using Error::Error;
};

// Filesystem-level failure (open, read, write).
struct IoError : Error {
    using Error::Error;
};

// Binary file does not follow its documented format.
struct FormatError : Error {
    using Error::Error;
};

// Text file does not parse; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace pcx
