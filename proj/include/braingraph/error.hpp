#pragma once

#include <stdexcept>
#include <string>

namespace braingraph {

// Base of every error the toolkit throws. Validation-class errors map to CLI
// exit code 1, IO-class errors to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class BoundsError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t row, std::size_t col)
        : ValidationError(what + " (row " + std::to_string(row) + ", column " + std::to_string(col) + ")"),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

// Raised when a least-squares design is numerically rank deficient.
class ConditioningError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Non-finite loss or gradient during training / gradient checking.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Dataset / checkpoint corruption or version mismatch. Carries the offending
// graph index when one is known.
class LoadError : public IoError {
public:
    static constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

    explicit LoadError(const std::string& what, std::size_t graph_index = kNoIndex)
        : IoError(graph_index == kNoIndex ? what : "graph " + std::to_string(graph_index) + ": " + what),
          graph_index_(graph_index) {}

    std::size_t graph_index() const noexcept { return graph_index_; }

private:
    std::size_t graph_index_;
};

class VersionError : public LoadError {
public:
    using LoadError::LoadError;
};

}  // namespace braingraph
