#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffsg {

/// Raised when a solution violates a hard constraint the objective needs.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative numeric routine failed to converge or produced non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called on an object that is not in the required state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite value produced inside a denoising chain.
class SamplingError : public std::runtime_error {
 public:
  SamplingError(int step, const std::string& what)
      : std::runtime_error("sampling failed at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Malformed or incompatible file. `line` is 1-based, 0 when not line-specific.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace diffsg
