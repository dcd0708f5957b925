#pragma once

#include <stdexcept>
#include <string>

namespace slotid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or infinity reached a place that requires finite values.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Shapes or sizes of arguments do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed (bad magic, version, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (factorization, SVD).
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace detail
}  // namespace slotid
