#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nonunion {

enum class ErrorKind {
    // cohort
    UnknownColumn,
    MissingColumn,
    TypeMismatch,
    UnknownCategory,
    InvalidDate,
    InvalidSchema,
    DegenerateSplit,
    InvalidConfig,
    Io,
    // preprocess
    AllMissingColumn,
    SchemaMismatch,
    SingleClass,
    // models
    Diverged,
    DegenerateKernel,
    DimensionMismatch,
    // metrics / compare / calibration
    LengthMismatch,
    EmptyMatrix,
    Unachievable,
    InvalidPlan,
    TooFewPairs,
    AllZeroDifferences,
    EmptyInput,
    TooFewPoints,
    InvalidFraction,
    DegenerateMean,
    // artifacts
    InvalidArtifact,
    Internal,
};

std::string_view to_string(ErrorKind kind);

/// How a failure is reported at the process boundary.
enum class ErrorCategory { User = 1, Data = 2, Internal = 3 };

ErrorCategory category_of(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Error raised while parsing a tabular file; carries the offending location.
class CellError : public Error {
public:
    CellError(ErrorKind kind, std::size_t row, std::string column, const std::string& detail);

    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace nonunion
