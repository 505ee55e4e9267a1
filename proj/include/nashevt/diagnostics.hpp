#pragma once

// Convergence diagnostics: empirical Wasserstein distances, the drift gap
// between the N-player and mean-field feedbacks, the Girsanov density between
// the Nash and decentralized systems, and log-log scaling fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nashevt/errors.hpp"
#include "nashevt/measure.hpp"
#include "nashevt/parallel.hpp"
#include "nashevt/particle_sim.hpp"
#include "nashevt/riccati.hpp"
#include "nashevt/stats.hpp"

namespace nashevt {

// ---------------------------------------------------------------------------
// Wasserstein-1 in one dimension

/// W1 between two empirical measures. Equal sizes pair sorted atoms; unequal
/// sizes integrate |F_A^{-1} - F_B^{-1}| exactly over the merged breakpoints
/// {i/n} u {j/m}.
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  if (x.size() == y.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
  }
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = 0.0;
  double acc = 0.0;
  while (i < x.size() && j < y.size()) {
    // Next breakpoint; compare i+1 over n against j+1 over m in integers.
    const auto lhs = static_cast<std::uint64_t>(i + 1) * y.size();
    const auto rhs = static_cast<std::uint64_t>(j + 1) * x.size();
    const double next = lhs <= rhs ? static_cast<double>(i + 1) / n : static_cast<double>(j + 1) / m;
    acc += (next - prev) * std::abs(x[i] - y[j]);
    prev = next;
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return acc;
}

/// W1 between a sample and N(mean, std^2), midpoint rule at (i - 1/2)/n.
inline double wasserstein1_to_gaussian(std::span<const double> sample, double mean, double stddev) {
  if (sample.empty()) throw std::invalid_argument("wasserstein1_to_gaussian: empty sample");
  if (!(stddev >= 0.0)) throw std::invalid_argument("wasserstein1_to_gaussian: std must be >= 0");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double q = stddev == 0.0 ? mean : mean + stddev * normal_quantile((static_cast<double>(i) + 0.5) / n);
    s += std::abs(x[i] - q);
  }
  return s / n;
}

// ---------------------------------------------------------------------------
// Log-log regression

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double residual_norm = 0.0;
};

/// OLS of log y on log x.
inline SlopeFit loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("loglog_slope: size mismatch");
  if (xs.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(xs[k] > 0.0) || !(ys[k] > 0.0)) throw std::domain_error("loglog_slope: inputs must be positive");
    lx[k] = std::log(xs[k]);
    ly[k] = std::log(ys[k]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (sxx == 0.0) throw std::domain_error("loglog_slope: x values must not all coincide");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = ly[k] - (fit.intercept + fit.slope * lx[k]);
    ssr += r * r;
  }
  fit.residual_norm = std::sqrt(ssr);
  fit.stderr_slope = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2) / sxx) : 0.0;
  return fit;
}

/// One statistic along a ladder of N, with Monte Carlo errors and a fit.
struct ScalingSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_stderr;
  std::vector<std::size_t> replications;
  std::vector<std::size_t> failures;
  SlopeFit fit;

  void add(double xv, double yv, double se = 0.0, std::size_t reps = 0, std::size_t fails = 0) {
    if (!x.empty() && !(xv > x.back())) throw std::invalid_argument("ScalingSeries: x must be strictly increasing");
    x.push_back(xv);
    y.push_back(yv);
    y_stderr.push_back(se);
    replications.push_back(reps);
    failures.push_back(fails);
  }

  const SlopeFit& refit() {
    fit = loglog_slope(x, y);
    return fit;
  }
};

// ---------------------------------------------------------------------------
// Feedback drifts

/// Drift vector of the whole system at time t: out[i] for states x.
using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// Nash feedback drift tilde_b(x_i, mu^N, U^{i,N}_{x_i}).
inline DriftFn lq_nash_drift(const GameModel& model, const RiccatiSolution& nplayer) {
  return [&model, &nplayer](double t, std::span<const double> x, std::span<double> out) {
    EmpiricalMeasure mu(x);
    const MeasureArg m{std::cref(mu)};
    const double eta = nplayer.eta_at(t);
    const double w = nplayer.weight();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = model.tilde_b(x[i], m, -eta * (mu.mean() - x[i]) * w);
  };
}

/// Decentralized feedback drift tilde_b(x_i, mu^N, U_x(t, x_i, mu^N)).
inline DriftFn lq_decentralized_drift(const GameModel& model, const RiccatiSolution& mf) {
  return [&model, &mf](double t, std::span<const double> x, std::span<double> out) {
    EmpiricalMeasure mu(x);
    const MeasureArg m{std::cref(mu)};
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = model.tilde_b(x[i], m, master_Ux(mf, t, x[i], m));
  };
}

// ---------------------------------------------------------------------------
// Drift gap

/// Sum over players of the squared difference between the N-player and the
/// mean-field feedback drifts, both evaluated at the given states. Terms are
/// summed in sorted order so relabelling the particles cannot change the result.
inline double drift_gap(std::span<const double> states, const RiccatiSolution& nplayer, const RiccatiSolution& mf,
                        double t) {
  if (!mf.is_mean_field()) throw std::invalid_argument("drift_gap: second solution must be mean-field");
  if (states.empty()) throw std::invalid_argument("drift_gap: empty state vector");
  const GameModel model = make_lq_coefficients(mf.params());
  std::vector<double> b1(states.size()), b2(states.size());
  lq_nash_drift(model, nplayer)(t, states, b1);
  lq_decentralized_drift(model, mf)(t, states, b2);
  std::vector<double> terms(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) terms[i] = (b1[i] - b2[i]) * (b1[i] - b2[i]);
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += v;
  return s;
}

/// Drift gap on a simulated ensemble; t must be a recorded grid node.
inline double drift_gap(const ParticleEnsemble& nash, const RiccatiSolution& nplayer, const RiccatiSolution& mf,
                        double t) {
  return drift_gap(nash.at_time(t), nplayer, mf, t);
}

// ---------------------------------------------------------------------------
// Girsanov density

/// Running log-martingale M, its quadratic variation and E = exp(M - <M>/2)
/// on every grid node.
struct DensityPath {
  std::vector<double> M;
  std::vector<double> qv;
  std::vector<double> E;
  bool overflow = false;
};

/// Density of the decentralized law with respect to the Nash law along the
/// simulated Nash paths. Integrands are (B2 - B1)/sigma per particle, with B1
/// the Nash drift and B2 the decentralized drift.
inline DensityPath girsanov_density(const ParticleEnsemble& nash, const DriftFn& decentralized, const DriftFn& nash_drift,
                                    const BrownianPanel& panel, double sigma) {
  if (nash.stride() != 1) throw std::invalid_argument("girsanov_density: ensemble must record every step");
  if (panel.N != nash.N() || panel.steps != nash.steps())
    throw std::invalid_argument("girsanov_density: panel does not match the ensemble");
  if (!(sigma > 0.0)) throw std::invalid_argument("girsanov_density: sigma must be > 0");
  const std::size_t n = nash.N();
  const std::size_t steps = nash.steps();
  const double dt = nash.grid().dt();
  DensityPath path;
  path.M.assign(steps + 1, 0.0);
  path.qv.assign(steps + 1, 0.0);
  path.E.assign(steps + 1, 1.0);
  std::vector<double> b1(n), b2(n);
  double m = 0.0;
  double qv = 0.0;
  for (std::size_t j = 0; j < steps; ++j) {
    const auto x = nash.at_step(j);
    const double t = nash.grid()[j];
    nash_drift(t, x, b1);
    decentralized(t, x, b2);
    double dm = 0.0;
    double dq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double theta = (b2[i] - b1[i]) / sigma;
      dm += theta * panel.dW(i, j);
      dq += theta * theta;
    }
    m += dm;
    qv += dq * dt;
    path.M[j + 1] = m;
    path.qv[j + 1] = qv;
    path.E[j + 1] = std::exp(m - 0.5 * qv);
    if (!std::isfinite(path.E[j + 1]) || !(path.E[j + 1] > 0.0)) path.overflow = true;
  }
  return path;
}

// ---------------------------------------------------------------------------
// Scaling studies over an N ladder

/// A scaling N is dropped when more than this fraction of replications fail.
inline constexpr double kMaxFailureRate = 0.2;

struct ScalingStudy {
  ScalingSeries series;
  std::vector<std::size_t> dropped;  // N values removed by the failure policy
  // values[k][r]: per-replication statistic for ladder entry k (NaN = failed).
  std::vector<std::vector<double>> values;
  std::size_t attempted = 0;
  std::vector<FailureRecord> failures;  // message prefixed with the N value
};

struct ScalingSpec {
  std::vector<std::size_t> ladder;
  std::size_t reps = 30;
  double t = 0.5;
  double dt = 0.01;
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
  std::string name;
};

/// Runs stat(N, rep) for every ladder entry and replication; rows failing
/// with NumericalFailure are dropped. y is the mean (or max) over reps.
template <class Stat>
ScalingStudy run_scaling_study(const ScalingSpec& spec, bool use_max, Stat&& stat) {
  if (spec.ladder.size() < 2) throw std::invalid_argument("scaling: need at least two ladder values");
  ScalingStudy out;
  out.series.name = spec.name;
  for (std::size_t n : spec.ladder) {
    auto batch = run_replications<double>(spec.reps, spec.workers, [&](std::size_t r) { return stat(n, r); });
    std::vector<double> row(spec.reps, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < spec.reps; ++r)
      if (batch.results[r]) row[r] = *batch.results[r];
    out.values.push_back(row);
    out.attempted += batch.attempted();
    for (auto f : batch.failures) {
      f.message = "N=" + std::to_string(n) + ": " + f.message;
      out.failures.push_back(std::move(f));
    }
    if (batch.failure_rate() > kMaxFailureRate || batch.failed() == batch.attempted()) {
      out.dropped.push_back(n);
      continue;
    }
    const auto ok = batch.successes();
    const SampleSummary s = summarize(ok);
    const double y = use_max ? *std::max_element(ok.begin(), ok.end()) : s.mean;
    out.series.add(static_cast<double>(n), y, s.stderr_mean, batch.attempted(), batch.failed());
  }
  if (out.series.x.size() >= 2) out.series.refit();
  return out;
}

/// Mean over replications of W1(empirical at t, limit law at t)^p.
inline ScalingStudy wasserstein_scaling(System system, const LQSetup& setup, const ScalingSpec& spec, double p) {
  if (spec.reps < 1) throw std::invalid_argument("wasserstein_scaling: reps must be >= 1");
  const ParametricLaw law = setup.flow.law_at(spec.t);
  std::vector<RiccatiSolution> nplayer;
  if (system == System::kNash)
    for (std::size_t n : spec.ladder) nplayer.push_back(solve_nplayer_riccati(setup.params, n, setup.mean_field.grid()));
  auto index_of = [&](std::size_t n) {
    return static_cast<std::size_t>(std::find(spec.ladder.begin(), spec.ladder.end(), n) - spec.ladder.begin());
  };
  return run_scaling_study(spec, false, [&](std::size_t n, std::size_t rep) {
    SimConfig cfg;
    cfg.N = n;
    cfg.dt = spec.dt;
    cfg.T = spec.t;
    cfg.master_seed = spec.master_seed;
    cfg.replication = rep;
    cfg.systems = {system};
    cfg.record_stride = cfg.grid().steps();
    const BrownianPanel panel = sample_brownian_panel(cfg, setup.params.initial_law());
    const RiccatiSolution* np = system == System::kNash ? &nplayer[index_of(n)] : nullptr;
    const ParticleEnsemble ens = simulate_system(system, cfg, setup, np, panel);
    return std::pow(wasserstein1_to_gaussian(ens.terminal(), law.mean, law.stddev()), p);
  });
}

/// Max over replications of drift_gap at t along the ladder.
inline ScalingStudy driftgap_scaling(const LQSetup& setup, const ScalingSpec& spec) {
  std::vector<RiccatiSolution> nplayer;
  for (std::size_t n : spec.ladder) nplayer.push_back(solve_nplayer_riccati(setup.params, n, setup.mean_field.grid()));
  return run_scaling_study(spec, true, [&](std::size_t n, std::size_t rep) {
    const auto k = static_cast<std::size_t>(std::find(spec.ladder.begin(), spec.ladder.end(), n) - spec.ladder.begin());
    SimConfig cfg;
    cfg.N = n;
    cfg.dt = spec.dt;
    cfg.T = spec.t;
    cfg.master_seed = spec.master_seed;
    cfg.replication = rep;
    cfg.systems = {System::kNash};
    cfg.record_stride = cfg.grid().steps();
    const BrownianPanel panel = sample_brownian_panel(cfg, setup.params.initial_law());
    const ParticleEnsemble ens = simulate_nash(cfg, setup.model, nplayer[k], panel);
    return drift_gap(ens, nplayer[k], setup.mean_field, spec.t);
  });
}

/// Per-replication |E_t - 1| and E_t for the Nash/decentralized pair.
struct GirsanovSample {
  double abs_dev = 0.0;
  double density = 1.0;
};

inline GirsanovSample girsanov_replicate(const LQSetup& setup, const RiccatiSolution& nplayer, std::size_t n,
                                         double t, double dt, std::uint64_t seed, std::size_t rep) {
  SimConfig cfg;
  cfg.N = n;
  cfg.dt = dt;
  cfg.T = t;
  cfg.master_seed = seed;
  cfg.replication = rep;
  cfg.systems = {System::kNash};
  const BrownianPanel panel = sample_brownian_panel(cfg, setup.params.initial_law());
  const ParticleEnsemble ens = simulate_nash(cfg, setup.model, nplayer, panel);
  const DensityPath path = girsanov_density(ens, lq_decentralized_drift(setup.model, setup.mean_field),
                                            lq_nash_drift(setup.model, nplayer), panel, setup.params.sigma);
  if (path.overflow) throw NumericalFailure("Girsanov density overflow", path.E.size() - 1);
  const double e = path.E.back();
  return {std::abs(e - 1.0), e};
}

}  // namespace nashevt
