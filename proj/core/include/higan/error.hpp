#pragma once

#include <stdexcept>
#include <string>

namespace higan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates an operation's precondition (shape, range, channel count).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Random generation that could not satisfy its constraints within its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, Corrupt, Version };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Raised by the trainer when any loss component turns NaN or infinite.
/// what() carries a dump of every component of the failing step.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace higan
