#pragma once

#include <stdexcept>
#include <string>

namespace behrt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A NaN or Inf escaped an operation.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid user-supplied configuration or arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file. Carries the 1-based line number when one applies.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace behrt
