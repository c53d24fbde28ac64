#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bmfs {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition (e.g. an empty block) does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Division by zero or NaN/Inf appearing in an iterative procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Every coordinate of r was clamped to zero by a projected step.
class DegenerateStepError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientSupportError : public Error {
 public:
  InsufficientSupportError(std::size_t nnz, std::size_t requested)
      : Error("insufficient support: nnz(r) = " + std::to_string(nnz) +
              " < d = " + std::to_string(requested)),
        nnz_(nnz),
        requested_(requested) {}

  std::size_t nnz() const noexcept { return nnz_; }
  std::size_t requested() const noexcept { return requested_; }

 private:
  std::size_t nnz_;
  std::size_t requested_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bmfs
