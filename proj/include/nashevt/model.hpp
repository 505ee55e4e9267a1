#pragma once

// Game-model contract and the linear-quadratic systemic-risk benchmark.
//
// LQ benchmark (V = R):
//   b(x, m, v) = a (mean(m) - x) + v
//   f(x, m, v) = v^2 / 2 - q v (mean(m) - x) + (eps / 2) (mean(m) - x)^2
//   g(x, m)    = (c / 2) (mean(m) - x)^2
// so that hat_v(x, m, y) = q (mean(m) - x) - y and
//   tilde_b(x, m, y) = (a + q)(mean(m) - x) - y.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "nashevt/measure.hpp"

namespace nashevt {

struct LQParams {
  double a = 1.0;      // mean-reversion rate
  double q = 0.5;      // control cross-term weight
  double eps = 1.0;    // running quadratic penalty
  double c = 0.5;      // terminal penalty
  double sigma = 0.7;  // volatility
  double T = 1.0;      // horizon
  double mu0_mean = 0.0;
  double mu0_std = 1.0;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("LQParams: " + what); };
    for (double v : {a, q, eps, c, sigma, T, mu0_mean, mu0_std})
      if (!std::isfinite(v)) fail("all parameters must be finite");
    if (!(sigma > 0.0)) fail("sigma must be > 0");
    if (!(T > 0.0)) fail("T must be > 0");
    if (!(mu0_std >= 0.0)) fail("mu0_std must be >= 0");
    if (!(eps >= q * q)) fail("eps must be >= q^2");
    if (!(c >= 0.0)) fail("c must be >= 0");
  }

  ParametricLaw initial_law() const { return ParametricLaw::gaussian(mu0_mean, mu0_std * mu0_std); }
};

/// Closed interval of admissible controls.
struct ControlSet {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

/// Coefficient bundle of one game instance. Measure arguments are either an
/// empirical measure or a parametric law.
struct GameModel {
  using Coefficient = std::function<double(double x, const MeasureArg& m, double v)>;
  using Terminal = std::function<double(double x, const MeasureArg& m)>;
  // Linear functional derivative of m -> tilde_b(x, m, U_x(t, x, m)) at base_law, as a kernel in z.
  using MeasureDerivative = std::function<double(double t, double x, const ParametricLaw& base_law, double z)>;

  Coefficient b;
  Coefficient f;
  Terminal g;
  Coefficient hat_v;    // third argument is the adjoint y
  Coefficient tilde_b;  // b(x, m, hat_v(x, m, y))
  Coefficient tilde_f;  // f(x, m, hat_v(x, m, y))
  MeasureDerivative drift_measure_derivative;
  ControlSet control_set;
  // True when the measure-derivative kernel does not depend on x; lets the
  // linearized system integrate it once per step instead of once per particle.
  bool derivative_state_free = false;
};

inline double lq_hat_v(const LQParams& p, double x, double m_mean, double y) {
  return p.q * (m_mean - x) - y;
}

inline double lq_b(const LQParams& p, double x, double m_mean, double v) { return p.a * (m_mean - x) + v; }

inline double lq_f(const LQParams& p, double x, double m_mean, double v) {
  const double d = m_mean - x;
  return 0.5 * v * v - p.q * v * d + 0.5 * p.eps * d * d;
}

inline double lq_g(const LQParams& p, double x, double m_mean) {
  const double d = m_mean - x;
  return 0.5 * p.c * d * d;
}

/// LQ coefficients without the measure derivative (that one needs the master
/// field; see make_lq_model in riccati.hpp).
inline GameModel make_lq_coefficients(const LQParams& p) {
  p.validate();
  GameModel m;
  m.b = [p](double x, const MeasureArg& mu, double v) { return lq_b(p, x, mean_of(mu), v); };
  m.f = [p](double x, const MeasureArg& mu, double v) { return lq_f(p, x, mean_of(mu), v); };
  m.g = [p](double x, const MeasureArg& mu) { return lq_g(p, x, mean_of(mu)); };
  m.hat_v = [p](double x, const MeasureArg& mu, double y) { return lq_hat_v(p, x, mean_of(mu), y); };
  m.tilde_b = [b = m.b, hat_v = m.hat_v](double x, const MeasureArg& mu, double y) {
    return b(x, mu, hat_v(x, mu, y));
  };
  m.tilde_f = [f = m.f, hat_v = m.hat_v](double x, const MeasureArg& mu, double y) {
    return f(x, mu, hat_v(x, mu, y));
  };
  return m;
}

}  // namespace nashevt
