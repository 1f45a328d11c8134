#pragma once

#include <stdexcept>
#include <string>

namespace spgee {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// CSV cell could not be parsed (message carries the row number).
class ParseError : public Error {
public:
  using Error::Error;
};

/// A required column is missing from the CSV header.
class SchemaError : public Error {
public:
  using Error::Error;
};

/// Input file contains no data rows.
class EmptyDatasetError : public Error {
public:
  using Error::Error;
};

/// Mismatched matrix/vector dimensions between related objects.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Kernel window around an evaluation point carries almost no mass.
class InsufficientLocalDataError : public Error {
public:
  InsufficientLocalDataError(const std::string& msg, double at)
      : Error(msg), at_(at) {}
  double at() const { return at_; }

private:
  double at_;
};

/// Direction vector has (near) zero norm and cannot be normalized.
class DegenerateDirectionError : public Error {
public:
  using Error::Error;
};

/// Variance estimation collapsed (e.g. all residuals are zero).
class DegenerateVarianceError : public Error {
public:
  using Error::Error;
};

/// Correlation parameter outside its admissible range.
class ParameterRangeError : public Error {
public:
  using Error::Error;
};

/// Design matrices too rank-deficient for inference.
class DegenerateDesignError : public Error {
public:
  using Error::Error;
};

/// Malformed configuration file.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Too many replications (or an essential stage) failed to converge.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace spgee
