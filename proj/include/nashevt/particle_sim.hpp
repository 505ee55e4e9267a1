#pragma once

// Euler-Maruyama simulation of the four coupled particle systems on one
// shared Brownian panel:
//   nash          drift tilde_b(X^i, mu^N, U^{i,N}_{x_i})
//   decentralized drift tilde_b(X^i, mu^N, U_x(t, X^i, mu^N))
//   linearized    drift tilde_b(X^i, L_t, U_x(t, X^i, L_t)) + int dm-derivative d(mu^N - L_t)
//   iid           drift tilde_b(X^i, L_t, U_x(t, X^i, L_t))
// with L_t the law of the representative player. The scheme is fully
// explicit: the drift at step j only sees the states at step j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nashevt/errors.hpp"
#include "nashevt/measure.hpp"
#include "nashevt/model.hpp"
#include "nashevt/quadrature.hpp"
#include "nashevt/riccati.hpp"
#include "nashevt/rng.hpp"
#include "nashevt/time_grid.hpp"

namespace nashevt {

enum class System { kNash, kDecentralized, kLinearized, kIid };

inline std::string_view to_string(System s) {
  switch (s) {
    case System::kNash: return "nash";
    case System::kDecentralized: return "decentralized";
    case System::kLinearized: return "linearized";
    case System::kIid: return "iid";
  }
  return "unknown";
}

inline std::optional<System> parse_system(std::string_view name) {
  for (System s : {System::kNash, System::kDecentralized, System::kLinearized, System::kIid})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

struct SimConfig {
  std::size_t N = 100;
  double dt = 0.01;
  double T = 1.0;  // simulated horizon; may stop before the game horizon
  std::uint64_t master_seed = 0;
  std::uint64_t replication = 0;
  std::vector<System> systems{System::kNash, System::kIid};
  // When false every system draws its own panel (noise_tag = system index + 1).
  bool shared_noise = true;
  // Keep every record_stride-th step; the last step is always a multiple.
  std::size_t record_stride = 1;

  TimeGrid grid() const { return TimeGrid::with_step(T, dt); }

  void validate() const {
    if (N == 0) throw std::invalid_argument("SimConfig: N must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be > 0");
    const TimeGrid g = grid();
    if (record_stride == 0 || g.steps() % record_stride != 0)
      throw std::invalid_argument("SimConfig: record_stride must divide the step count");
  }
};

/// Initial states and Brownian increments shared by the coupled systems.
struct BrownianPanel {
  std::size_t N = 0;
  std::size_t steps = 0;
  double dt = 0.0;
  std::vector<double> x0;          // N
  std::vector<double> increments;  // N x steps, row-major by particle

  double dW(std::size_t i, std::size_t j) const noexcept { return increments[i * steps + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {increments.data() + i * steps, steps}; }
};

/// Panel for (master_seed, replication). Particle i's initial value and its
/// increments come from independent substreams keyed by
/// derive_seed(master_seed, replication, tag, noise_tag, i), so panels are
/// reproducible and independent of evaluation order.
inline BrownianPanel sample_brownian_panel(const SimConfig& cfg, const ParametricLaw& mu0,
                                           std::uint64_t noise_tag = 0) {
  cfg.validate();
  BrownianPanel panel;
  panel.N = cfg.N;
  panel.steps = cfg.grid().steps();
  panel.dt = cfg.grid().dt();
  panel.x0.resize(cfg.N);
  panel.increments.resize(cfg.N * panel.steps);
  const double sd0 = mu0.stddev();
  const double sqrt_dt = std::sqrt(panel.dt);
  for (std::size_t i = 0; i < cfg.N; ++i) {
    Stream init(derive_seed(cfg.master_seed, cfg.replication, static_cast<std::uint64_t>(StreamTag::kInitialState),
                            noise_tag, i));
    panel.x0[i] = mu0.mean + sd0 * init.normal();
    Stream inc(derive_seed(cfg.master_seed, cfg.replication, static_cast<std::uint64_t>(StreamTag::kIncrements),
                           noise_tag, i));
    double* row = panel.increments.data() + i * panel.steps;
    for (std::size_t j = 0; j < panel.steps; ++j) row[j] = sqrt_dt * inc.normal();
  }
  return panel;
}

/// Sums consecutive groups of `factor` increments: the same Brownian paths
/// observed on a grid `factor` times coarser.
inline BrownianPanel coarsen(const BrownianPanel& fine, std::size_t factor) {
  if (factor == 0 || fine.steps % factor != 0) throw std::invalid_argument("coarsen: factor must divide steps");
  BrownianPanel out;
  out.N = fine.N;
  out.steps = fine.steps / factor;
  out.dt = fine.dt * static_cast<double>(factor);
  out.x0 = fine.x0;
  out.increments.assign(out.N * out.steps, 0.0);
  for (std::size_t i = 0; i < fine.N; ++i)
    for (std::size_t j = 0; j < out.steps; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < factor; ++k) s += fine.dW(i, j * factor + k);
      out.increments[i * out.steps + j] = s;
    }
  return out;
}

/// Applies a particle relabelling: row i of the result is row perm[i] of the input.
inline BrownianPanel permute_panel(const BrownianPanel& panel, std::span<const std::size_t> perm) {
  if (perm.size() != panel.N) throw std::invalid_argument("permute_panel: permutation size mismatch");
  BrownianPanel out = panel;
  for (std::size_t i = 0; i < panel.N; ++i) {
    out.x0[i] = panel.x0[perm[i]];
    std::copy_n(panel.row(perm[i]).begin(), panel.steps, out.increments.begin() + static_cast<long>(i * panel.steps));
  }
  return out;
}

/// Simulated states of one system, stored time-major (one contiguous
/// cross-section per recorded step).
class ParticleEnsemble {
 public:
  ParticleEnsemble(System system, std::size_t n, TimeGrid grid, std::size_t stride)
      : system_(system), n_(n), grid_(grid), stride_(stride), states_(n * (grid.steps() / stride + 1)) {}

  System system() const noexcept { return system_; }
  std::size_t N() const noexcept { return n_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t steps() const noexcept { return grid_.steps(); }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t recorded() const noexcept { return grid_.steps() / stride_ + 1; }

  bool has_step(std::size_t j) const noexcept { return j <= steps() && j % stride_ == 0; }

  /// Cross-section at grid step j (must be a recorded step).
  std::span<const double> at_step(std::size_t j) const {
    if (!has_step(j)) throw std::out_of_range("ParticleEnsemble: step not recorded");
    return {states_.data() + (j / stride_) * n_, n_};
  }

  /// Cross-section at time t (must be a recorded grid node).
  std::span<const double> at_time(double t) const { return at_step(grid_.node_index(t)); }

  std::span<const double> initial() const { return at_step(0); }
  std::span<const double> terminal() const { return at_step(steps()); }

  double state(std::size_t i, std::size_t j) const { return at_step(j)[i]; }

  std::span<double> mutable_slot(std::size_t recorded_index) noexcept {
    return {states_.data() + recorded_index * n_, n_};
  }

 private:
  System system_;
  std::size_t n_;
  TimeGrid grid_;
  std::size_t stride_;
  std::vector<double> states_;
};

/// Moments of the representative player's law (Gaussian for the LQ model).
class MeanFieldFlow {
 public:
  MeanFieldFlow(TimeGrid grid, std::vector<double> mean, std::vector<double> var)
      : grid_(grid), mean_(std::move(mean)), var_(std::move(var)) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> mean() const noexcept { return mean_; }
  std::span<const double> variance() const noexcept { return var_; }

  ParametricLaw law_at(double t) const {
    if (!grid_.contains(t)) throw std::out_of_range("MeanFieldFlow: t outside grid");
    const auto [j, w] = grid_.locate(t);
    if (w == 0.0) return ParametricLaw::gaussian(mean_[j], var_[j]);
    if (w == 1.0) return ParametricLaw::gaussian(mean_[j + 1], var_[j + 1]);
    return ParametricLaw::gaussian((1 - w) * mean_[j] + w * mean_[j + 1], (1 - w) * var_[j] + w * var_[j + 1]);
  }

 private:
  TimeGrid grid_;
  std::vector<double> mean_;
  std::vector<double> var_;
};

/// mean_t = mu0_mean (the equilibrium drift has zero mean under the law
/// itself); var' = -2 (a + q + eta_t) var + sigma^2 by RK4 on the grid.
inline MeanFieldFlow solve_meanfield_flow(const LQParams& p, const RiccatiSolution& mf, const TimeGrid& grid) {
  if (!mf.is_mean_field()) throw std::invalid_argument("solve_meanfield_flow: needs the mean-field solution");
  if (grid.horizon() > mf.grid().horizon() * (1 + 1e-12))
    throw std::invalid_argument("solve_meanfield_flow: Riccati solution does not cover the grid");
  const double horizon = mf.grid().horizon();
  auto eta = [&](double t) { return mf.eta_smooth(std::min(t, horizon)); };
  auto rhs = [&](double t, double v) { return -2.0 * (p.a + p.q + eta(t)) * v + p.sigma * p.sigma; };

  std::vector<double> mean(grid.size(), p.mu0_mean);
  std::vector<double> var(grid.size());
  var[0] = p.mu0_std * p.mu0_std;
  const double h = grid.dt();
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    const double t = grid[j];
    const double v = var[j];
    const double k1 = rhs(t, v);
    const double k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1);
    const double k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2);
    const double k4 = rhs(grid[j + 1], v + h * k3);
    var[j + 1] = std::max(0.0, v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4));
  }
  return MeanFieldFlow(grid, std::move(mean), std::move(var));
}

namespace detail {

inline void check_panel(const SimConfig& cfg, const BrownianPanel& panel) {
  cfg.validate();
  const TimeGrid g = cfg.grid();
  if (panel.N != cfg.N || panel.steps != g.steps() || std::abs(panel.dt - g.dt()) > 1e-15 * g.dt())
    throw std::invalid_argument("simulate: panel does not match the configuration");
}

inline void check_horizon(const SimConfig& cfg, const RiccatiSolution& r) {
  if (cfg.T > r.grid().horizon() * (1 + 1e-12))
    throw std::invalid_argument("simulate: Riccati solution does not cover the simulated horizon");
}

// Generic explicit Euler loop. drift(j, t_j, states, out) fills the drift vector.
template <class Drift>
ParticleEnsemble euler_maruyama(System system, const SimConfig& cfg, const BrownianPanel& panel, double sigma,
                                Drift&& drift) {
  const TimeGrid grid = cfg.grid();
  const std::size_t n = cfg.N;
  const double dt = grid.dt();
  ParticleEnsemble ens(system, n, grid, cfg.record_stride);
  std::vector<double> x(panel.x0);
  std::vector<double> b(n);
  std::copy(x.begin(), x.end(), ens.mutable_slot(0).begin());
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    drift(j, grid[j], std::span<const double>(x), std::span<double>(b));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = x[i] + b[i] * dt + sigma * panel.dW(i, j);
      if (!std::isfinite(x[i]))
        throw NumericalFailure("non-finite state in " + std::string(to_string(system)) + " system", j + 1);
    }
    if ((j + 1) % cfg.record_stride == 0)
      std::copy(x.begin(), x.end(), ens.mutable_slot((j + 1) / cfg.record_stride).begin());
  }
  return ens;
}

}  // namespace detail

inline ParticleEnsemble simulate_nash(const SimConfig& cfg, const GameModel& model, const RiccatiSolution& nplayer,
                                      const BrownianPanel& panel) {
  detail::check_panel(cfg, panel);
  detail::check_horizon(cfg, nplayer);
  if (!nplayer.is_mean_field() && nplayer.players() != cfg.N)
    throw std::invalid_argument("simulate_nash: Riccati solution is for a different N");
  EmpiricalMeasure mu;
  const double w = nplayer.weight();
  return detail::euler_maruyama(System::kNash, cfg, panel, nplayer.params().sigma,
                                [&](std::size_t, double t, std::span<const double> x, std::span<double> out) {
                                  mu.reset(x);
                                  const MeasureArg m{std::cref(mu)};
                                  const double eta = nplayer.eta_at(t);
                                  for (std::size_t i = 0; i < x.size(); ++i) {
                                    const double y = -eta * (mu.mean() - x[i]) * w;
                                    out[i] = model.tilde_b(x[i], m, y);
                                  }
                                });
}

inline ParticleEnsemble simulate_decentralized(const SimConfig& cfg, const GameModel& model,
                                               const RiccatiSolution& mf, const BrownianPanel& panel) {
  detail::check_panel(cfg, panel);
  detail::check_horizon(cfg, mf);
  if (!mf.is_mean_field()) throw std::invalid_argument("simulate_decentralized: needs the mean-field solution");
  EmpiricalMeasure mu;
  return detail::euler_maruyama(System::kDecentralized, cfg, panel, mf.params().sigma,
                                [&](std::size_t, double t, std::span<const double> x, std::span<double> out) {
                                  mu.reset(x);
                                  const MeasureArg m{std::cref(mu)};
                                  for (std::size_t i = 0; i < x.size(); ++i)
                                    out[i] = model.tilde_b(x[i], m, master_Ux(mf, t, x[i], m));
                                });
}

inline ParticleEnsemble simulate_linearized(const SimConfig& cfg, const GameModel& model, const RiccatiSolution& mf,
                                            const MeanFieldFlow& flow, const BrownianPanel& panel) {
  detail::check_panel(cfg, panel);
  detail::check_horizon(cfg, mf);
  if (!mf.is_mean_field()) throw std::invalid_argument("simulate_linearized: needs the mean-field solution");
  if (cfg.T > flow.grid().horizon() * (1 + 1e-12))
    throw std::invalid_argument("simulate_linearized: flow does not cover the simulated horizon");
  if (!model.drift_measure_derivative) throw std::invalid_argument("simulate_linearized: model lacks a measure derivative");
  EmpiricalMeasure mu;
  return detail::euler_maruyama(
      System::kLinearized, cfg, panel, mf.params().sigma,
      [&](std::size_t, double t, std::span<const double> x, std::span<double> out) {
        mu.reset(x);
        const ParametricLaw law = flow.law_at(t);
        const MeasureArg m{law};
        auto correction_at = [&](double xi) {
          return integrate_against_difference(
              [&](double z) { return model.drift_measure_derivative(t, xi, law, z); }, mu, law);
        };
        const double shared = model.derivative_state_free ? correction_at(0.0) : 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double correction = model.derivative_state_free ? shared : correction_at(x[i]);
          out[i] = model.tilde_b(x[i], m, master_Ux(mf, t, x[i], m)) + correction;
        }
      });
}

inline ParticleEnsemble simulate_iid(const SimConfig& cfg, const GameModel& model, const RiccatiSolution& mf,
                                     const MeanFieldFlow& flow, const BrownianPanel& panel) {
  detail::check_panel(cfg, panel);
  detail::check_horizon(cfg, mf);
  if (!mf.is_mean_field()) throw std::invalid_argument("simulate_iid: needs the mean-field solution");
  if (cfg.T > flow.grid().horizon() * (1 + 1e-12))
    throw std::invalid_argument("simulate_iid: flow does not cover the simulated horizon");
  return detail::euler_maruyama(System::kIid, cfg, panel, mf.params().sigma,
                                [&](std::size_t, double t, std::span<const double> x, std::span<double> out) {
                                  const MeasureArg m{flow.law_at(t)};
                                  for (std::size_t i = 0; i < x.size(); ++i)
                                    out[i] = model.tilde_b(x[i], m, master_Ux(mf, t, x[i], m));
                                });
}

/// Everything the four simulators need for one LQ parameter set.
struct LQSetup {
  LQParams params;
  RiccatiSolution mean_field;
  MeanFieldFlow flow;
  GameModel model;

  /// Grid step dt over the full game horizon params.T.
  static LQSetup build(const LQParams& p, double dt) {
    const TimeGrid grid = TimeGrid::with_step(p.T, dt);
    RiccatiSolution mf = solve_mfg_riccati(p, grid);
    MeanFieldFlow flow = solve_meanfield_flow(p, mf, grid);
    GameModel model = make_lq_model(p, mf);
    return LQSetup{p, std::move(mf), std::move(flow), std::move(model)};
  }
};

/// Simulates one system. `nplayer` is only consulted for the Nash system.
inline ParticleEnsemble simulate_system(System s, const SimConfig& cfg, const LQSetup& setup,
                                        const RiccatiSolution* nplayer, const BrownianPanel& panel) {
  switch (s) {
    case System::kNash:
      if (nplayer == nullptr) throw std::invalid_argument("simulate_system: Nash system needs an N-player solution");
      return simulate_nash(cfg, setup.model, *nplayer, panel);
    case System::kDecentralized: return simulate_decentralized(cfg, setup.model, setup.mean_field, panel);
    case System::kLinearized: return simulate_linearized(cfg, setup.model, setup.mean_field, setup.flow, panel);
    case System::kIid: return simulate_iid(cfg, setup.model, setup.mean_field, setup.flow, panel);
  }
  throw std::invalid_argument("simulate_system: unknown system");
}

}  // namespace nashevt
