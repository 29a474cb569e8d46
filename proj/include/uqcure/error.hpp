#pragma once

#include <stdexcept>
#include <string>

namespace uqcure {

// Base for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented contract (bad shape, range, argument).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Requested entity does not exist (dataset, region).
class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Operation is illegal in the current state (nothing to undo, region
// already done, stale client sequence number).
class StateError : public Error {
 public:
  using Error::Error;
};

// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace uqcure
