#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nashevt {

/// Uniform grid 0 = t_0 < t_1 < ... < t_n = horizon.
///
/// Nodes are computed as horizon * j / n rather than by accumulation, so the
/// last node is exactly the horizon and a grid with 2n steps contains every
/// node of the grid with n steps bit-for-bit.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    if (steps == 0) throw std::invalid_argument("TimeGrid: need at least one step");
  }

  /// Grid with step dt; horizon / dt must be an integer up to 1e-9 relative.
  static TimeGrid with_step(double horizon, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
      throw std::invalid_argument("TimeGrid: horizon/dt = " + std::to_string(ratio) + " is not an integer");
    return TimeGrid(horizon, static_cast<std::size_t>(rounded));
  }

  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }
  double horizon() const noexcept { return horizon_; }
  double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }

  double operator[](std::size_t j) const noexcept {
    return j == steps_ ? horizon_ : horizon_ * static_cast<double>(j) / static_cast<double>(steps_);
  }

  std::vector<double> nodes() const {
    std::vector<double> out(size());
    for (std::size_t j = 0; j < size(); ++j) out[j] = (*this)[j];
    return out;
  }

  bool contains(double t) const noexcept { return t >= 0.0 && t <= horizon_; }

  /// Index of the node equal to t (within 1e-9 * dt); throws if t is off-grid.
  std::size_t node_index(double t) const {
    if (!contains(t)) throw std::out_of_range("TimeGrid: t outside [0, horizon]");
    const double pos = t / dt();
    const double rounded = std::round(pos);
    if (std::abs(pos - rounded) > 1e-9) throw std::invalid_argument("TimeGrid: t is not a grid node");
    return static_cast<std::size_t>(rounded);
  }

  /// Cell index j and weight w with t = (1 - w) t_j + w t_{j+1}.
  std::pair<std::size_t, double> locate(double t) const {
    if (!contains(t)) throw std::out_of_range("TimeGrid: t outside [0, horizon]");
    const double pos = t / dt();
    auto j = static_cast<std::size_t>(std::floor(pos));
    if (j >= steps_) return {steps_ - 1, 1.0};
    return {j, pos - static_cast<double>(j)};
  }

 private:
  double horizon_;
  std::size_t steps_;
};

}  // namespace nashevt
