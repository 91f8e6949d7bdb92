#pragma once

#include <stdexcept>
#include <string>

namespace cortrieve {

// Error families map onto process exit codes in the CLI:
//   UsageError -> 2, DataError (and subclasses) -> 3, DivergenceError -> 4.

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : DataError {
    explicit ParseError(const std::string& msg) : DataError(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cortrieve
