#ifndef MANIFOLD_ILPR_ERRORS_HPP
#define MANIFOLD_ILPR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace milpr {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input lies outside the domain of an operation (e.g. not positive definite).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure broke down (singular system, no convergence, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Total kernel mass at a query point vanished.
class EmptyNeighborhoodError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Bandwidth selection found no finite score.
class SelectionError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// t-SNE could not run on the supplied distances.
class EmbeddingError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed input file. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input whose values violate a data invariant (e.g. non-PD row).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace milpr

#endif  // MANIFOLD_ILPR_ERRORS_HPP
