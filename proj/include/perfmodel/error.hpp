#pragma once

#include <stdexcept>
#include <string>

namespace perfmodel {

// Base for every error raised by the library. Callers that only care about
// "bad input vs. bug" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A layer or network description that violates its invariants.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed structured input (JSON, CSV). The message names the failure point.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A model file written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Data that is well formed but unusable (too few samples, mismatched kinds,
// non-finite values, zero denominators).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace perfmodel
