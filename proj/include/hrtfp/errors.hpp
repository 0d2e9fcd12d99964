#pragma once

#include <stdexcept>
#include <string>

namespace hrtfp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes or lengths do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Least-squares system too ill-conditioned to trust.
class RankError : public Error {
 public:
  explicit RankError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Mesh is not a closed, consistently oriented genus-0 surface.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hrtfp
