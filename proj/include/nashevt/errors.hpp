#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nashevt {

/// Non-finite or exploding numerical state (Riccati blow-up, particle blow-up,
/// density overflow). Carries the grid step where it was detected.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nashevt
