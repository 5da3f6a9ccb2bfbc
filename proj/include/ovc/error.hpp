#pragma once

#include <stdexcept>
#include <string>

namespace ovc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented schema or invariant.
class ValidationError : public Error {
  public:
    ValidationError(const std::string& field, const std::string& message)
        : Error("invalid " + field + ": " + message), field_(field) {}

    const std::string& field() const { return field_; }

  private:
    std::string field_;
};

/// A text file could not be parsed; carries the 1-based line number.
class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

}  // namespace ovc
