#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nashevt/measure.hpp"

namespace nashevt {

/// Gauss-Hermite rule for the weight exp(-x^2) (Newton iteration on the
/// orthonormal recurrence). Exact for polynomials of degree <= 2n - 1.
class GaussHermite {
 public:
  explicit GaussHermite(std::size_t order) : nodes_(order), weights_(order) {
    if (order == 0) throw std::invalid_argument("GaussHermite: order must be positive");
    const int n = static_cast<int>(order);
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
      if (i == 0)
        z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
      else if (i == 1)
        z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
      else if (i == 2)
        z = 1.86 * z - 0.86 * nodes_[0];
      else if (i == 3)
        z = 1.91 * z - 0.91 * nodes_[1];
      else
        z = 2.0 * z - nodes_[i - 2];
      double pp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p1 = pim4;
        double p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        }
        pp = std::sqrt(2.0 * n) * p2;
        const double z1 = z;
        z = z1 - p1 / pp;
        if (std::abs(z - z1) <= 1e-15) break;
      }
      nodes_[i] = z;
      nodes_[n - 1 - i] = -z;
      weights_[i] = 2.0 / (pp * pp);
      weights_[n - 1 - i] = weights_[i];
    }
  }

  /// E[f(Z)] for Z ~ Gaussian(law.mean, law.variance).
  template <class F>
  double expectation(F&& f, const ParametricLaw& law) const {
    if (law.variance == 0.0) return f(law.mean);
    const double scale = std::sqrt(2.0 * law.variance);
    double acc = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) acc += weights_[k] * f(law.mean + scale * nodes_[k]);
    return acc / std::sqrt(std::numbers::pi);
  }

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline const GaussHermite& default_gauss_hermite() {
  static const GaussHermite rule(40);
  return rule;
}

/// Integral of a kernel against the zero-mass signed measure (empirical - law).
template <class Kernel>
double integrate_against_difference(Kernel&& kernel, const EmpiricalMeasure& empirical, const ParametricLaw& law) {
  double acc = 0.0;
  for (double z : empirical.sorted()) acc += kernel(z);
  acc /= static_cast<double>(empirical.size());
  return acc - default_gauss_hermite().expectation(kernel, law);
}

}  // namespace nashevt
