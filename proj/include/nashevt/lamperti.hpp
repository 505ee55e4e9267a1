#pragma once

// Reduction of state-dependent volatility to unit volatility through the
// scaling map S(x) = int_0^x dz / sigma(z), plus the induced transforms of
// model coefficients, measures and normalizing constants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nashevt/errors.hpp"
#include "nashevt/evt.hpp"
#include "nashevt/io.hpp"
#include "nashevt/measure.hpp"
#include "nashevt/model.hpp"
#include "nashevt/parallel.hpp"
#include "nashevt/rng.hpp"
#include "nashevt/stats.hpp"

namespace nashevt {

struct VolatilityProfile {
  std::function<double(double)> sigma;
  std::function<double(double)> dsigma;
  double sigma_min = 0.0;
  double sigma_max = 0.0;

  static VolatilityProfile constant(double s) {
    return {[s](double) { return s; }, [](double) { return 0.0; }, s, s};
  }

  /// sigma(x) = level + amplitude * sin(x).
  static VolatilityProfile sinusoidal(double level, double amplitude) {
    return {[=](double x) { return level + amplitude * std::sin(x); },
            [=](double x) { return amplitude * std::cos(x); }, level - std::abs(amplitude),
            level + std::abs(amplitude)};
  }

  /// Spot-checks sigma_min <= sigma <= sigma_max (and sigma > 0) on a grid.
  void check(double lo, double hi, std::size_t points = 1001) const {
    if (!sigma || !dsigma) throw std::invalid_argument("VolatilityProfile: sigma and sigma' are required");
    if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min) || !std::isfinite(sigma_max))
      throw std::invalid_argument("VolatilityProfile: need 0 < sigma_min <= sigma_max < inf");
    for (std::size_t k = 0; k < points; ++k) {
      const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
      const double s = sigma(x);
      if (!(s > 0.0)) throw std::domain_error("VolatilityProfile: sigma <= 0 at x=" + io::format_double(x));
      const double slack = 1e-12 * sigma_max;
      if (s < sigma_min - slack || s > sigma_max + slack)
        throw std::domain_error("VolatilityProfile: sigma leaves [sigma_min, sigma_max] at x=" + io::format_double(x));
    }
  }
};

/// Monotone map S with S(0) = 0 and S' = 1/sigma on a compact working
/// interval. Node values come from adaptive Gauss-Kronrod quadrature; between
/// nodes the map is the cubic Hermite interpolant with the exact slopes
/// 1/sigma. Constant sigma is handled in closed form.
class ScalingMap {
 public:
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  bool affine() const noexcept { return affine_; }
  std::span<const double> nodes() const noexcept { return x_; }
  std::span<const double> node_values() const noexcept { return s_; }
  double range_lo() const noexcept { return affine_ ? lo_ / scale_ : s_.front(); }
  double range_hi() const noexcept { return affine_ ? hi_ / scale_ : s_.back(); }

  bool in_domain(double x) const noexcept { return x >= lo_ && x <= hi_; }
  bool in_range(double u) const noexcept { return u >= range_lo() && u <= range_hi(); }

  double forward(double x) const {
    if (!in_domain(x)) throw std::out_of_range("ScalingMap: x=" + io::format_double(x) + " outside working interval");
    if (affine_) return x / scale_;
    const std::size_t k = cell_of(x);
    return hermite(k, x);
  }

  double derivative(double x) const {
    if (!in_domain(x)) throw std::out_of_range("ScalingMap: x=" + io::format_double(x) + " outside working interval");
    return 1.0 / profile_->sigma(x);
  }

  /// S^{-1}(u): bisection on the cached cell, then one Newton polish.
  double inverse(double u) const {
    if (!in_range(u)) throw std::out_of_range("ScalingMap: u=" + io::format_double(u) + " outside mapped interval");
    if (affine_) return scale_ * u;
    const auto it = std::upper_bound(s_.begin(), s_.end(), u);
    std::size_t k = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    k = std::min(k, x_.size() - 2);
    double a = x_[k];
    double b = x_[k + 1];
    for (int iter = 0; iter < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++iter) {
      const double mid = 0.5 * (a + b);
      if (hermite(k, mid) < u)
        a = mid;
      else
        b = mid;
    }
    double x = 0.5 * (a + b);
    const double slope = hermite_slope(k, x);
    if (!(slope > 0.0)) throw NumericalFailure("ScalingMap: inverse did not converge", 0);
    const double polished = x - (hermite(k, x) - u) / slope;
    if (polished >= x_[k] && polished <= x_[k + 1]) x = polished;
    return x;
  }

  const VolatilityProfile& profile() const { return *profile_; }

  friend ScalingMap build_scaling(const VolatilityProfile& profile, double lo, double hi, std::size_t cells);

 private:
  std::size_t cell_of(double x) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(k, x_.size() - 2);
  }

  double hermite(std::size_t k, double x) const {
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * s_[k] + (t3 - 2 * t2 + t) * h * d_[k] + (-2 * t3 + 3 * t2) * s_[k + 1] +
           (t3 - t2) * h * d_[k + 1];
  }

  double hermite_slope(std::size_t k, double x) const {
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * s_[k] + (6 * t - 6 * t2) * s_[k + 1]) / h + (3 * t2 - 4 * t + 1) * d_[k] +
           (3 * t2 - 2 * t) * d_[k + 1];
  }

  std::shared_ptr<const VolatilityProfile> profile_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  bool affine_ = false;
  double scale_ = 1.0;
  std::vector<double> x_;
  std::vector<double> s_;
  std::vector<double> d_;
};

namespace detail {

inline double integrate_inverse_sigma(const VolatilityProfile& p, double a, double b) {
  if (a == b) return 0.0;
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double z) { return 1.0 / p.sigma(z); }, a, b, 15, 1e-12, &err);
  if (!std::isfinite(v) || err > 1e-10) throw NumericalFailure("ScalingMap: quadrature did not reach tolerance", 0);
  return v;
}

}  // namespace detail

/// Builds S on [lo, hi] (which must contain 0) with `cells` Hermite cells.
inline ScalingMap build_scaling(const VolatilityProfile& profile, double lo, double hi, std::size_t cells = 4096) {
  if (!(lo <= 0.0 && 0.0 <= hi && lo < hi)) throw std::invalid_argument("build_scaling: interval must contain 0");
  if (cells < 2) throw std::invalid_argument("build_scaling: need at least two cells");
  profile.check(lo, hi);
  ScalingMap m;
  m.profile_ = std::make_shared<const VolatilityProfile>(profile);
  m.lo_ = lo;
  m.hi_ = hi;
  if (profile.sigma_min == profile.sigma_max) {
    m.affine_ = true;
    m.scale_ = profile.sigma_min;
    return m;
  }
  m.x_.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k)
    m.x_[k] = k == cells ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cells);
  m.s_.assign(cells + 1, 0.0);
  m.d_.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) m.d_[k] = 1.0 / profile.sigma(m.x_[k]);

  // Anchor at 0 and accumulate cell integrals outward in both directions.
  const auto it = std::upper_bound(m.x_.begin(), m.x_.end(), 0.0);
  const std::size_t right = std::min<std::size_t>(static_cast<std::size_t>(it - m.x_.begin()), cells);
  const std::size_t left = right - 1;
  m.s_[left] = -detail::integrate_inverse_sigma(profile, m.x_[left], 0.0);
  m.s_[right] = detail::integrate_inverse_sigma(profile, 0.0, m.x_[right]);
  for (std::size_t k = right; k < cells; ++k)
    m.s_[k + 1] = m.s_[k] + detail::integrate_inverse_sigma(profile, m.x_[k], m.x_[k + 1]);
  for (std::size_t k = left; k-- > 0;)
    m.s_[k] = m.s_[k + 1] - detail::integrate_inverse_sigma(profile, m.x_[k], m.x_[k + 1]);
  for (std::size_t k = 0; k < cells; ++k)
    if (!(m.s_[k + 1] > m.s_[k])) throw NumericalFailure("ScalingMap: forward map not increasing", k);
  return m;
}

/// Applies `map` to every atom.
template <class Map>
EmpiricalMeasure pushforward_measure(const EmpiricalMeasure& m, Map&& map) {
  std::vector<double> out(m.size());
  const auto src = m.samples();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = map(src[i]);
  return EmpiricalMeasure(out);
}

namespace detail {

// Evaluates f(S^{-1} u, S^{-1}_# m) with the pushed-forward measure kept alive
// for the duration of the call.
template <class F>
auto with_original_measure(const ScalingMap& s, const MeasureArg& m, F&& f) {
  if (const auto* law = std::get_if<ParametricLaw>(&m)) {
    if (!s.affine())
      throw std::invalid_argument("transform_model: Gaussian laws only push forward under constant volatility");
    const double k = s.inverse(1.0) - s.inverse(0.0);
    return f(MeasureArg{ParametricLaw::gaussian(s.inverse(law->mean), k * k * law->variance)});
  }
  const EmpiricalMeasure original =
      pushforward_measure(std::get<0>(m).get(), [&](double u) { return s.inverse(u); });
  return f(MeasureArg{std::cref(original)});
}

}  // namespace detail

/// Unit-volatility model in the coordinates u = S(x):
///   b -> b(S^{-1}u, ., v)/sigma(S^{-1}u) - sigma'(S^{-1}u)/2,  f -> f o S^{-1},  g -> g o S^{-1}.
/// Controls are unchanged; the Hamiltonian minimizer follows from
/// hat_v(x, m, y / sigma(x)) since the drift is divided by sigma.
inline GameModel transform_model(const GameModel& model, const VolatilityProfile& profile, const ScalingMap& scaling) {
  auto base = std::make_shared<const GameModel>(model);
  auto prof = std::make_shared<const VolatilityProfile>(profile);
  auto s = std::make_shared<const ScalingMap>(scaling);
  GameModel out;
  out.control_set = model.control_set;
  out.b = [=](double u, const MeasureArg& m, double v) {
    const double x = s->inverse(u);
    return detail::with_original_measure(*s, m, [&](const MeasureArg& mo) {
      return base->b(x, mo, v) / prof->sigma(x) - 0.5 * prof->dsigma(x);
    });
  };
  out.f = [=](double u, const MeasureArg& m, double v) {
    const double x = s->inverse(u);
    return detail::with_original_measure(*s, m, [&](const MeasureArg& mo) { return base->f(x, mo, v); });
  };
  out.g = [=](double u, const MeasureArg& m) {
    const double x = s->inverse(u);
    return detail::with_original_measure(*s, m, [&](const MeasureArg& mo) { return base->g(x, mo); });
  };
  out.hat_v = [=](double u, const MeasureArg& m, double y) {
    const double x = s->inverse(u);
    return detail::with_original_measure(*s, m, [&](const MeasureArg& mo) { return base->hat_v(x, mo, y / prof->sigma(x)); });
  };
  out.tilde_b = [b = out.b, hv = out.hat_v](double u, const MeasureArg& m, double y) { return b(u, m, hv(u, m, y)); };
  out.tilde_f = [f = out.f, hv = out.hat_v](double u, const MeasureArg& m, double y) { return f(u, m, hv(u, m, y)); };
  out.derivative_state_free = false;
  return out;
}

/// b~_N = S(b_N), a~_N = a_N S'(b_N); gamma is unchanged.
inline Normalizers transform_normalizers(const Normalizers& nz, const ScalingMap& s) {
  Normalizers out(nz.gamma(), nz.time(), nz.descriptor() + " mapped through S");
  for (const auto& [n, pr] : nz.table()) out.set(n, pr.a * s.derivative(pr.b), s.forward(pr.b));
  return out;
}

inline void write_scaling_csv(std::ostream& os, const ScalingMap& s, std::size_t points = 401) {
  os << "x,S(x)\n";
  for (std::size_t k = 0; k < points; ++k) {
    const double x = k + 1 == points ? s.hi() : s.lo() + (s.hi() - s.lo()) * static_cast<double>(k) / static_cast<double>(points - 1);
    os << io::format_double(x) << ',' << io::format_double(s.forward(x)) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Consistency checks

enum class OriginalScheme { kEuler, kMilstein };

struct StrongGapSpec {
  std::function<double(double)> drift;  // uncontrolled drift b(x) of the original SDE
  double x0 = 0.5;
  double T = 1.0;
  std::vector<double> dts{0.02, 0.01, 0.005};
  std::size_t paths = 2000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct StrongGapResult {
  std::vector<double> dts;
  std::vector<double> gap_euler;
  std::vector<double> gap_milstein;
  std::size_t attempted = 0;
  std::vector<FailureRecord> failures;
};

/// Mean |S(X_T) - Y_T| where X solves dX = b dt + sigma(X) dW and Y solves the
/// transformed unit-volatility SDE on the same Brownian increments. The
/// increments for coarser steps are sums of the finest ones.
inline StrongGapResult lamperti_strong_gap(const ScalingMap& s, const StrongGapSpec& spec) {
  if (spec.dts.empty()) throw std::invalid_argument("lamperti_strong_gap: empty step list");
  const double finest = *std::min_element(spec.dts.begin(), spec.dts.end());
  const auto fine_steps = static_cast<std::size_t>(std::llround(spec.T / finest));
  std::vector<std::size_t> factors;
  for (double dt : spec.dts) {
    const double f = dt / finest;
    const auto fi = static_cast<std::size_t>(std::llround(f));
    if (std::abs(f - static_cast<double>(fi)) > 1e-9 || fine_steps % fi != 0)
      throw std::invalid_argument("lamperti_strong_gap: steps must be integer multiples of the finest step");
    factors.push_back(fi);
  }
  const auto& prof = s.profile();
  struct PathGaps {
    std::vector<double> euler, milstein;
  };
  auto batch = run_replications<PathGaps>(spec.paths, spec.workers, [&](std::size_t path) {
    Stream rng(derive_seed(spec.seed, path, static_cast<std::uint64_t>(StreamTag::kLampertiPanel)));
    std::vector<double> dw(fine_steps);
    const double sq = std::sqrt(finest);
    for (auto& v : dw) v = sq * rng.normal();
    PathGaps g;
    for (std::size_t fi : factors) {
      const std::size_t steps = fine_steps / fi;
      const double dt = finest * static_cast<double>(fi);
      double xe = spec.x0, xm = spec.x0, y = s.forward(spec.x0);
      for (std::size_t j = 0; j < steps; ++j) {
        double w = 0.0;
        for (std::size_t k = 0; k < fi; ++k) w += dw[j * fi + k];
        const double se = prof.sigma(xe);
        const double sm = prof.sigma(xm);
        xe += spec.drift(xe) * dt + se * w;
        xm += spec.drift(xm) * dt + sm * w + 0.5 * sm * prof.dsigma(xm) * (w * w - dt);
        const double xy = s.inverse(y);
        y += (spec.drift(xy) / prof.sigma(xy) - 0.5 * prof.dsigma(xy)) * dt + w;
        if (!s.in_domain(xe) || !s.in_domain(xm) || !s.in_range(y))
          throw NumericalFailure("Lamperti path left the working interval", j + 1);
      }
      g.euler.push_back(std::abs(s.forward(xe) - y));
      g.milstein.push_back(std::abs(s.forward(xm) - y));
    }
    return g;
  });
  StrongGapResult out;
  out.dts = spec.dts;
  out.attempted = batch.attempted();
  out.failures = batch.failures;
  const auto ok = batch.successes();
  if (ok.empty()) throw NumericalFailure("Lamperti consistency: every path failed", 0);
  out.gap_euler.assign(factors.size(), 0.0);
  out.gap_milstein.assign(factors.size(), 0.0);
  for (const auto& g : ok)
    for (std::size_t k = 0; k < factors.size(); ++k) {
      out.gap_euler[k] += g.euler[k];
      out.gap_milstein[k] += g.milstein[k];
    }
  for (std::size_t k = 0; k < factors.size(); ++k) {
    out.gap_euler[k] /= static_cast<double>(ok.size());
    out.gap_milstein[k] /= static_cast<double>(ok.size());
  }
  return out;
}

struct NormalizerPanelResult {
  double ks_original = 0.0;  // normalized Gaussian maxima vs G_0
  double ks_mapped = 0.0;    // S-mapped maxima with transformed normalizers vs G_0
  double gap = 0.0;
  std::size_t replications = 0;
};

/// Paired panel: R maxima of n i.i.d. N(0,1) draws, normalized once by the
/// Gaussian quantile normalizers and once, after mapping through S, by their
/// transforms.
inline NormalizerPanelResult normalizer_panel_check(const ScalingMap& s, std::size_t n, std::size_t reps,
                                                    std::uint64_t seed, std::size_t workers = 1) {
  const std::size_t ns[] = {n};
  const Normalizers nz = normalizers_from_quantiles(gaussian_quantile_fn(0.0, 1.0), 0.0, ns, 0.0, "N(0,1)");
  const Normalizers mapped = transform_normalizers(nz, s);
  std::vector<double> maxima(reps);
  parallel_for(reps, workers, [&](std::size_t r) {
    Stream rng(derive_seed(seed, r, static_cast<std::uint64_t>(StreamTag::kSynthetic)));
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, rng.normal());
    maxima[r] = m;
  });
  std::vector<double> z(reps), zm(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    z[r] = (maxima[r] - nz.b(n)) / nz.a(n);
    zm[r] = (s.forward(maxima[r]) - mapped.b(n)) / mapped.a(n);
  }
  const auto g0 = [](double x) { return gev_cdf(0.0, x); };
  NormalizerPanelResult out;
  out.ks_original = ks_statistic(z, g0);
  out.ks_mapped = ks_statistic(zm, g0);
  out.gap = std::abs(out.ks_original - out.ks_mapped);
  out.replications = reps;
  return out;
}

/// Largest |S(S^{-1}(u)) - u| and |S^{-1}(S(x)) - x| over `points` random
/// points of the working interval.
inline double round_trip_error(const ScalingMap& s, std::size_t points, std::uint64_t seed) {
  Stream rng(derive_seed(seed, std::uint64_t{0}, static_cast<std::uint64_t>(StreamTag::kSynthetic)));
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    const double u = s.range_lo() + (s.range_hi() - s.range_lo()) * rng.uniform();
    worst = std::max(worst, std::abs(s.forward(s.inverse(u)) - u));
    const double x = s.lo() + (s.hi() - s.lo()) * rng.uniform();
    worst = std::max(worst, std::abs(s.inverse(s.forward(x)) - x));
  }
  return worst;
}

}  // namespace nashevt
