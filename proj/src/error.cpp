#include "nonunion/error.hpp"

namespace nonunion {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownColumn: return "UnknownColumn";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::TypeMismatch: return "TypeMismatch";
        case ErrorKind::UnknownCategory: return "UnknownCategory";
        case ErrorKind::InvalidDate: return "InvalidDate";
        case ErrorKind::InvalidSchema: return "InvalidSchema";
        case ErrorKind::DegenerateSplit: return "DegenerateSplit";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::Io: return "Io";
        case ErrorKind::AllMissingColumn: return "AllMissingColumn";
        case ErrorKind::SchemaMismatch: return "SchemaMismatch";
        case ErrorKind::SingleClass: return "SingleClass";
        case ErrorKind::Diverged: return "Diverged";
        case ErrorKind::DegenerateKernel: return "DegenerateKernel";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptyMatrix: return "EmptyMatrix";
        case ErrorKind::Unachievable: return "Unachievable";
        case ErrorKind::InvalidPlan: return "InvalidPlan";
        case ErrorKind::TooFewPairs: return "TooFewPairs";
        case ErrorKind::AllZeroDifferences: return "AllZeroDifferences";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::TooFewPoints: return "TooFewPoints";
        case ErrorKind::InvalidFraction: return "InvalidFraction";
        case ErrorKind::DegenerateMean: return "DegenerateMean";
        case ErrorKind::InvalidArtifact: return "InvalidArtifact";
        case ErrorKind::Internal: return "Internal";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::InvalidPlan:
        case ErrorKind::InvalidFraction:
        case ErrorKind::Io:
            return ErrorCategory::User;
        case ErrorKind::Diverged:
        case ErrorKind::DegenerateKernel:
        case ErrorKind::Internal:
            return ErrorCategory::Internal;
        default:
            return ErrorCategory::Data;
    }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

CellError::CellError(ErrorKind kind, std::size_t row, std::string column, const std::string& detail)
    : Error(kind, "row " + std::to_string(row) + ", column '" + column + "': " + detail),
      row_(row),
      column_(std::move(column)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace nonunion
