#pragma once

// Closed-form value functions of the LQ benchmark.
//
// Mean-field master field:
//   U(t, x, m) = (eta_t / 2) (mean(m) - x)^2 + chi_t
//   d eta/dt = 2 (a + q) eta + eta^2 - (eps - q^2),      eta_T = c
//   d chi/dt = -sigma^2 eta / 2,                         chi_T = 0
//
// N-player value functions (closed-loop Nash):
//   U^{i,N}(t, x) = (eta^N_t / 2) (xbar - x_i)^2 + chi^N_t
//   d eta^N/dt = 2 (a + q) eta^N + (1 - 1/N^2) (eta^N)^2 - (eps - q^2)
//   d chi^N/dt = -sigma^2 eta^N (N - 1) / (2N)
// Differentiating the ansatz in x_i gives
//   U^{i,N}_{x_i} = -eta^N (xbar - x_i) w_N,   w_N = 1 - 1/N,
// since d(xbar - x_i)/dx_i = 1/N - 1. Both ODE pairs come from substituting
// the ansatz into the respective HJB equations and matching the quadratic and
// constant terms; residual_master / residual_nplayer check that numerically.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "nashevt/errors.hpp"
#include "nashevt/io.hpp"
#include "nashevt/measure.hpp"
#include "nashevt/model.hpp"
#include "nashevt/time_grid.hpp"

namespace nashevt {

struct RiccatiOptions {
  double blowup_cap = 1e6;
};

class RiccatiSolution {
 public:
  enum class Kind { kMeanField, kNPlayer };

  RiccatiSolution(Kind kind, std::size_t players, LQParams params, TimeGrid grid, std::vector<double> eta,
                  std::vector<double> chi)
      : kind_(kind),
        players_(players),
        params_(params),
        grid_(grid),
        eta_(std::move(eta)),
        chi_(std::move(chi)) {
    if (eta_.size() != grid_.size() || chi_.size() != grid_.size())
      throw std::invalid_argument("RiccatiSolution: value count does not match grid");
  }

  Kind kind() const noexcept { return kind_; }
  bool is_mean_field() const noexcept { return kind_ == Kind::kMeanField; }
  /// Player count N; 0 for the mean-field solution.
  std::size_t players() const noexcept { return players_; }
  const LQParams& params() const noexcept { return params_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> eta() const noexcept { return eta_; }
  std::span<const double> chi() const noexcept { return chi_; }

  /// Gradient weight w_N = 1 - 1/N of the N-player ansatz; 1 for the
  /// mean-field solution (the N -> infinity limit).
  double weight() const noexcept {
    return is_mean_field() ? 1.0 : 1.0 - 1.0 / static_cast<double>(players_);
  }

  /// eta at t, linear between nodes.
  double eta_at(double t) const { return interpolate(eta_, t); }

  /// Right-hand side of the eta ODE at a given eta value.
  double eta_rhs(double eta) const noexcept {
    const auto& p = params_;
    const double n = static_cast<double>(players_);
    const double quad = is_mean_field() ? 1.0 : 1.0 - 1.0 / (n * n);
    return 2.0 * (p.a + p.q) * eta + quad * eta * eta - (p.eps - p.q * p.q);
  }

  /// eta at t by cubic Hermite interpolation with node slopes taken from the
  /// ODE itself; fourth-order accurate between nodes. Used by the moment flow.
  double eta_smooth(double t) const {
    if (!grid_.contains(t)) throw std::out_of_range("RiccatiSolution: t outside [0, T]");
    const auto [j, w] = grid_.locate(t);
    if (w == 0.0) return eta_[j];
    if (w == 1.0) return eta_[j + 1];
    const double h = grid_.dt();
    const double y0 = eta_[j];
    const double y1 = eta_[j + 1];
    const double w2 = w * w;
    const double w3 = w2 * w;
    return (2 * w3 - 3 * w2 + 1) * y0 + (w3 - 2 * w2 + w) * h * eta_rhs(y0) + (-2 * w3 + 3 * w2) * y1 +
           (w3 - w2) * h * eta_rhs(y1);
  }

  double chi_at(double t) const { return interpolate(chi_, t); }

  /// Returns a copy with eta shifted by delta on every node (sensitivity checks).
  RiccatiSolution perturbed(double delta) const {
    RiccatiSolution out = *this;
    for (double& e : out.eta_) e += delta;
    return out;
  }

 private:
  double interpolate(const std::vector<double>& values, double t) const {
    if (!grid_.contains(t)) throw std::out_of_range("RiccatiSolution: t outside [0, T]");
    const auto [j, w] = grid_.locate(t);
    if (w == 0.0) return values[j];
    if (w == 1.0) return values[j + 1];
    return (1.0 - w) * values[j] + w * values[j + 1];
  }

  Kind kind_;
  std::size_t players_;
  LQParams params_;
  TimeGrid grid_;
  std::vector<double> eta_;
  std::vector<double> chi_;
};

namespace detail {

// Backward RK4 on (eta, chi) with
//   eta' = 2(a+q) eta + quad_coef eta^2 - (eps - q^2),  chi' = -sigma^2 noise_coef eta / 2.
inline RiccatiSolution integrate_riccati(RiccatiSolution::Kind kind, std::size_t players, const LQParams& p,
                                         const TimeGrid& grid, double quad_coef, double noise_coef,
                                         const RiccatiOptions& opts) {
  p.validate();
  if (std::abs(grid.horizon() - p.T) > 1e-12 * p.T) throw std::invalid_argument("Riccati: grid must end at T");

  const double lin = 2.0 * (p.a + p.q);
  const double src = p.eps - p.q * p.q;
  auto rhs = [&](double eta) { return lin * eta + quad_coef * eta * eta - src; };

  const std::size_t n = grid.steps();
  std::vector<double> eta(n + 1);
  std::vector<double> chi(n + 1);
  eta[n] = p.c;
  chi[n] = 0.0;
  const double h = -grid.dt();
  for (std::size_t j = n; j-- > 0;) {
    const double e = eta[j + 1];
    const double k1 = rhs(e);
    const double k2 = rhs(e + 0.5 * h * k1);
    const double k3 = rhs(e + 0.5 * h * k2);
    const double k4 = rhs(e + h * k3);
    eta[j] = e + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    // chi' depends on eta only; reuse the RK4 stage values of eta.
    const double g = -0.5 * p.sigma * p.sigma * noise_coef;
    const double e2 = e + 0.5 * h * k1;
    const double e3 = e + 0.5 * h * k2;
    const double e4 = e + h * k3;
    chi[j] = chi[j + 1] + h / 6.0 * g * (e + 2.0 * e2 + 2.0 * e3 + e4);
    if (!std::isfinite(eta[j]) || std::abs(eta[j]) > opts.blowup_cap)
      throw NumericalFailure("Riccati blow-up: |eta| exceeded cap", j);
  }
  return RiccatiSolution(kind, players, p, grid, std::move(eta), std::move(chi));
}

inline void require_interior_node(const RiccatiSolution& r, double t, std::size_t& j) {
  j = r.grid().node_index(t);
  if (j == 0 || j == r.grid().steps())
    throw std::domain_error("residual: t at grid boundary has no central difference");
}

inline double central_dt(std::span<const double> values, std::size_t j, double dt) {
  return (values[j + 1] - values[j - 1]) / (2.0 * dt);
}

}  // namespace detail

inline RiccatiSolution solve_mfg_riccati(const LQParams& p, const TimeGrid& grid, const RiccatiOptions& opts = {}) {
  return detail::integrate_riccati(RiccatiSolution::Kind::kMeanField, 0, p, grid, 1.0, 1.0, opts);
}

/// N = 1 is accepted as the degenerate single-player case (the gradient
/// weight w_1 vanishes).
inline RiccatiSolution solve_nplayer_riccati(const LQParams& p, std::size_t players, const TimeGrid& grid,
                                             const RiccatiOptions& opts = {}) {
  if (players == 0) throw std::invalid_argument("solve_nplayer_riccati: N must be positive");
  const double n = static_cast<double>(players);
  return detail::integrate_riccati(RiccatiSolution::Kind::kNPlayer, players, p, grid, 1.0 - 1.0 / (n * n),
                                   (n - 1.0) / n, opts);
}

// ---------------------------------------------------------------------------
// Master field

inline double master_U(const RiccatiSolution& r, double t, double x, const MeasureArg& m) {
  const double d = mean_of(m) - x;
  return 0.5 * r.eta_at(t) * d * d + r.chi_at(t);
}

inline double master_Ux(const RiccatiSolution& r, double t, double x, const MeasureArg& m) {
  return -r.eta_at(t) * (mean_of(m) - x);
}

/// Kernel z -> (a + q + eta_t) z of the linear functional derivative of the
/// equilibrium drift m -> (a + q + eta_t)(mean(m) - x). Defined up to an
/// additive constant; only meaningful against zero-mass signed measures.
inline double drift_measure_derivative_lq(const RiccatiSolution& r, double t, double /*x*/,
                                          const ParametricLaw& /*base_law*/, double z) {
  const auto& p = r.params();
  return (p.a + p.q + r.eta_at(t)) * z;
}

/// Master-equation left-hand side at an interior grid node. U_t by central
/// difference over one grid step; spatial and measure derivatives analytic.
inline double residual_master(const RiccatiSolution& r, double t, double x, const MeasureArg& m) {
  std::size_t j = 0;
  detail::require_interior_node(r, t, j);
  const auto& p = r.params();
  const double dt = r.grid().dt();
  const double eta = r.eta()[j];
  const double mbar = mean_of(m);
  const double d = mbar - x;

  const double u_t = 0.5 * detail::central_dt(r.eta(), j, dt) * d * d + detail::central_dt(r.chi(), j, dt);
  const double u_x = -eta * d;
  const double u_xx = eta;

  const double v_star = lq_hat_v(p, x, mbar, u_x);
  const double hamiltonian = lq_b(p, x, mbar, v_star) * u_x + lq_f(p, x, mbar, v_star);

  // U_m(t, x, m, z) = eta (mean(m) - x) for every z, and U_mz = 0.
  const double u_m = eta * d;
  double transport = 0.0;
  if (const auto* law = std::get_if<ParametricLaw>(&m)) {
    transport = u_m * (p.a + p.q + eta) * (mbar - law->mean);
  } else {
    const auto& emp = std::get<0>(m).get();
    double acc = 0.0;
    for (double z : emp.sorted()) acc += (p.a + p.q + eta) * (mbar - z);
    transport = u_m * acc / static_cast<double>(emp.size());
  }
  return u_t + hamiltonian + 0.5 * p.sigma * p.sigma * u_xx + transport;
}

// ---------------------------------------------------------------------------
// N-player value functions

namespace detail {

inline double state_mean(std::span<const double> states) {
  double s = 0.0;
  for (double v : states) s += v;
  return s / static_cast<double>(states.size());
}

inline void check_nplayer_args(const RiccatiSolution& r, std::size_t n, std::size_t i) {
  if (n == 0) throw std::invalid_argument("N-player ansatz: empty state vector");
  if (i >= n) throw std::out_of_range("N-player ansatz: player index out of bounds");
  if (!r.is_mean_field() && r.players() != n)
    throw std::invalid_argument("N-player ansatz: state count does not match the solution's N");
}

}  // namespace detail

/// Gradient -eta (xbar - x_i) w for a known state average xbar.
inline double nplayer_gradient(const RiccatiSolution& r, double t, double xbar, double x_i) {
  return -r.eta_at(t) * (xbar - x_i) * r.weight();
}

inline double nplayer_U(const RiccatiSolution& r, double t, std::span<const double> states, std::size_t i) {
  detail::check_nplayer_args(r, states.size(), i);
  const double d = detail::state_mean(states) - states[i];
  return 0.5 * r.eta_at(t) * d * d + r.chi_at(t);
}

/// dU^{i,N}/dx_i at the given states (zero-based i). A mean-field solution is
/// accepted as the N -> infinity ansatz with weight 1.
inline double nplayer_Uxi(const RiccatiSolution& r, double t, std::span<const double> states, std::size_t i) {
  detail::check_nplayer_args(r, states.size(), i);
  return nplayer_gradient(r, t, detail::state_mean(states), states[i]);
}

/// Left-hand side of player i's HJB equation at an interior grid node.
inline double residual_nplayer(const RiccatiSolution& r, double t, std::span<const double> states, std::size_t i) {
  if (r.is_mean_field()) throw std::invalid_argument("residual_nplayer: needs an N-player solution");
  detail::check_nplayer_args(r, states.size(), i);
  std::size_t j = 0;
  detail::require_interior_node(r, t, j);
  const auto& p = r.params();
  const double dt = r.grid().dt();
  const double eta = r.eta()[j];
  const std::size_t n = states.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double xbar = detail::state_mean(states);
  const double d_i = xbar - states[i];

  const double u_t = 0.5 * detail::central_dt(r.eta(), j, dt) * d_i * d_i + detail::central_dt(r.chi(), j, dt);

  // dU^i/dx_k = eta d_i (1/N - delta_ik);  d^2 U^i/dx_k^2 = eta (1/N - delta_ik)^2.
  auto grad = [&](std::size_t owner, std::size_t k) {
    const double d_owner = xbar - states[owner];
    return eta * d_owner * (inv_n - (owner == k ? 1.0 : 0.0));
  };

  const double y_i = grad(i, i);
  const double v_star = lq_hat_v(p, states[i], xbar, y_i);
  const double hamiltonian = lq_b(p, states[i], xbar, v_star) * y_i + lq_f(p, states[i], xbar, v_star);

  double cross = 0.0;
  double laplacian = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = inv_n - (k == i ? 1.0 : 0.0);
    laplacian += eta * e * e;
    if (k == i) continue;
    const double y_k = grad(k, k);
    const double drift_k = lq_b(p, states[k], xbar, lq_hat_v(p, states[k], xbar, y_k));
    cross += grad(i, k) * drift_k;
  }
  return u_t + hamiltonian + cross + 0.5 * p.sigma * p.sigma * laplacian;
}

/// Full LQ game model including the measure derivative of the equilibrium drift.
inline GameModel make_lq_model(const LQParams& p, const RiccatiSolution& mean_field) {
  if (!mean_field.is_mean_field()) throw std::invalid_argument("make_lq_model: needs the mean-field solution");
  GameModel m = make_lq_coefficients(p);
  m.drift_measure_derivative = [r = mean_field](double t, double x, const ParametricLaw& law, double z) {
    return drift_measure_derivative_lq(r, t, x, law, z);
  };
  m.derivative_state_free = true;
  return m;
}

/// CSV with header "t,eta".
inline void write_riccati_csv(std::ostream& os, const RiccatiSolution& r) {
  os << "t,eta\n";
  for (std::size_t j = 0; j < r.grid().size(); ++j)
    os << io::format_double(r.grid()[j]) << ',' << io::format_double(r.eta()[j]) << '\n';
}

}  // namespace nashevt
