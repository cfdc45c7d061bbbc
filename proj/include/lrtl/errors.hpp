#pragma once

#include <stdexcept>
#include <string>

namespace lrtl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: non-finite entries, shape mismatch, asymmetric matrix.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An index or rank argument outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but the method cannot proceed on it.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped making progress.
class SolverDiverged : public Error {
 public:
  using Error::Error;
};

/// A metric is not defined for the given input.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrtl
