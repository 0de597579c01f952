#pragma once

#include <stdexcept>
#include <string>

namespace paseg {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WrongArityError : Error { using Error::Error; };
struct DuplicatePointsError : Error { using Error::Error; };
struct OutOfBoundsError : Error { using Error::Error; };
struct EmptyInputError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };

// Non-positive sigma/theta/tau, malformed counts, bad option values.
struct InvalidParamError : Error { using Error::Error; };

struct ShapeError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct TapeConsumedError : Error { using Error::Error; };

// A sampling category (foreground / positive / background) has no eligible
// location in the batch. The caller decides whether to skip the loss term.
struct InsufficientSamplesError : Error {
    explicit InsufficientSamplesError(std::string cat)
        : Error("insufficient samples in category: " + cat), category(std::move(cat)) {}
    std::string category;
};

struct ParseError : Error { using Error::Error; };
struct MissingFileError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct MissingGroundTruthError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };

}  // namespace paseg
