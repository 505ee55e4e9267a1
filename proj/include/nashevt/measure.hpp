#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace nashevt {

/// Gaussian law described by its first two moments.
struct ParametricLaw {
  enum class Family { kGaussian };

  Family family = Family::kGaussian;
  double mean = 0.0;
  double variance = 0.0;

  static ParametricLaw gaussian(double mean, double variance) {
    if (!(variance >= 0.0)) throw std::invalid_argument("ParametricLaw: variance must be >= 0");
    return ParametricLaw{Family::kGaussian, mean, variance};
  }

  double stddev() const { return std::sqrt(variance); }
};

/// Uniform probability measure on a finite list of atoms.
///
/// Keeps the atoms in their original order plus a sorted copy. The mean is
/// accumulated over the sorted copy, so it does not depend on how the atoms
/// are labelled.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  explicit EmpiricalMeasure(std::span<const double> samples) { reset(samples); }

  /// Replaces the atoms. The previous sort order is reused as a starting
  /// point, which turns re-sorting a slowly moving particle cloud into a
  /// near-linear insertion pass.
  void reset(std::span<const double> samples) {
    const bool reuse = order_.size() == samples.size();
    samples_.assign(samples.begin(), samples.end());
    if (!reuse) {
      order_.resize(samples_.size());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) { return less(a, b); });
    } else {
      insertion_sort();
    }
    sorted_.resize(samples_.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < order_.size(); ++k) {
      sorted_[k] = samples_[order_[k]];
      sum += sorted_[k];
    }
    mean_ = samples_.empty() ? 0.0 : sum / static_cast<double>(samples_.size());
  }

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::span<const double> samples() const noexcept { return samples_; }
  std::span<const double> sorted() const noexcept { return sorted_; }
  double mean() const noexcept { return mean_; }

  /// Left-continuous empirical quantile: smallest atom x with F(x) >= p.
  double quantile(double p) const {
    if (empty()) throw std::logic_error("EmpiricalMeasure::quantile on empty measure");
    if (!(p > 0.0 && p <= 1.0)) throw std::domain_error("EmpiricalMeasure::quantile: p must lie in (0, 1]");
    const double n = static_cast<double>(size());
    auto k = static_cast<std::size_t>(std::ceil(p * n));
    k = std::clamp<std::size_t>(k, 1, size());
    return sorted_[k - 1];
  }

 private:
  bool less(std::size_t a, std::size_t b) const {
    // Ties by label keep the order deterministic.
    return samples_[a] < samples_[b] || (samples_[a] == samples_[b] && a < b);
  }

  void insertion_sort() {
    for (std::size_t k = 1; k < order_.size(); ++k) {
      const std::size_t moving = order_[k];
      std::size_t j = k;
      while (j > 0 && less(moving, order_[j - 1])) {
        order_[j] = order_[j - 1];
        --j;
      }
      order_[j] = moving;
    }
  }

  std::vector<double> samples_;
  std::vector<double> sorted_;
  std::vector<std::size_t> order_;
  double mean_ = 0.0;
};

/// Measure argument accepted by model coefficients.
using MeasureArg = std::variant<std::reference_wrapper<const EmpiricalMeasure>, ParametricLaw>;

inline double mean_of(const MeasureArg& m) {
  if (const auto* law = std::get_if<ParametricLaw>(&m)) return law->mean;
  return std::get<0>(m).get().mean();
}

}  // namespace nashevt
