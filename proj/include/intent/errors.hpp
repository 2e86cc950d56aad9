#pragma once

#include <stdexcept>
#include <string>

namespace intent {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or channel counts disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (network, training, experiment, CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint manifest/blob inconsistent or unreadable.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Malformed image file or dataset layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing files or directories.
class PathError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward from a non-scalar node.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace intent
