#pragma once

#include <stdexcept>
#include <string>

namespace vitkit {

/// Root of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, data or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Class id outside [0, C).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API precondition (e.g. backward from a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed bytes or text in a file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Decoded values outside their allowed interval.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that fails a semantic check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced while strict finiteness checking is enabled.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vitkit
