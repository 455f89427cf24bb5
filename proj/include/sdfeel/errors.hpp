#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdfeel {

// Invalid user-facing configuration: bad key, bad value, infeasible setup.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector or matrix shapes that do not agree.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Input that violates a mathematical precondition (e.g. a non-stochastic matrix).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The aggregation protocol was driven out of order or with missing pieces.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant failed. Always an engine bug.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : std::runtime_error("diverged at global iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration),
        reason_(what) {}

  std::uint64_t iteration() const { return iteration_; }
  const std::string& reason() const { return reason_; }

 private:
  std::uint64_t iteration_;
  std::string reason_;
};

class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& what) : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace sdfeel
