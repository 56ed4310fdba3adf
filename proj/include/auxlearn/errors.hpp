#pragma once

#include <stdexcept>
#include <string>

namespace auxlearn {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Command line misuse (bad flag combinations, unparsable values).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Missing files, unreadable or malformed input, failed writes.
class IoError : public Error {
 public:
  using Error::Error;
};

// Mismatched matrix or vector dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Inputs outside an operation's domain (invalid rank, non-binary labels,
// asymmetric covariance, empty task set).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Singular or near-singular linear systems, degenerate random draws.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// An iterative fit stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace auxlearn
