#pragma once

#include <stdexcept>
#include <string>

namespace sfo {

// Invalid sizes, parameters or config entries. Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Mismatched vector/matrix dimensions, or a matrix lacking a required
// structural property (e.g. symmetry).
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// An operation was called in a state its contract does not allow.
class PreconditionError : public std::logic_error {
 public:
  explicit PreconditionError(const std::string& what) : std::logic_error(what) {}
};

class DegenerateSubspaceError : public std::runtime_error {
 public:
  explicit DegenerateSubspaceError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class MergeError : public std::runtime_error {
 public:
  explicit MergeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sfo
