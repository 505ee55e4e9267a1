#pragma once

// Extreme-value kernel: GEV family, quantile normalizers, top-k selection,
// the limiting order-statistics vector and the Poisson point-process limit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "nashevt/io.hpp"
#include "nashevt/rng.hpp"
#include "nashevt/stats.hpp"

namespace nashevt {

/// Below this |gamma| every GEV formula switches to its Gumbel limit.
inline constexpr double kSmallGamma = 1e-8;

inline bool is_gumbel(double gamma) noexcept { return std::abs(gamma) < kSmallGamma; }

/// -log G_gamma(x), i.e. (1 + gamma x)^(-1/gamma), with the support
/// convention: +inf left of the support when gamma > 0, 0 right of it when
/// gamma < 0.
inline double gev_tail(double gamma, double x) {
  if (std::isnan(x) || !std::isfinite(gamma)) return std::numeric_limits<double>::quiet_NaN();
  if (is_gumbel(gamma)) return std::exp(-x);
  if (std::isinf(x)) return x > 0 ? 0.0 : std::numeric_limits<double>::infinity();
  const double z = 1.0 + gamma * x;
  if (z <= 0.0) return gamma > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  return std::exp(-std::log1p(gamma * x) / gamma);
}

inline double gev_cdf(double gamma, double x) { return std::exp(-gev_tail(gamma, x)); }

/// Inverse of gev_cdf on (0,1).
inline double gev_quantile(double gamma, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("gev_quantile: p must lie in (0,1)");
  const double l = std::log(-std::log(p));
  if (is_gumbel(gamma)) return -l;
  return std::expm1(-gamma * l) / gamma;
}

/// Map from a partial sum E_1 + ... + E_j of unit exponentials to the j-th
/// component of the limiting vector.
inline double limit_transform(double gamma, double partial_sum) {
  const double l = std::log(partial_sum);
  if (is_gumbel(gamma)) return -l;
  return std::expm1(-gamma * l) / gamma;
}

/// CDF of the j-th (one-based) limiting component: P(Gamma_j >= tail(x)) for
/// a Gamma(j,1) variable.
inline double limit_component_cdf(double gamma, std::size_t j, double x) {
  if (j == 0) throw std::invalid_argument("limit_component_cdf: components are one-based");
  const double h = gev_tail(gamma, x);
  if (h <= 0.0) return 1.0;
  if (std::isinf(h)) return 0.0;
  return boost::math::gamma_q(static_cast<double>(j), h);
}

/// Limiting vector from explicit exponential draws (exposed for tests).
inline std::vector<double> limit_vector_from(double gamma, std::span<const double> exponentials) {
  std::vector<double> out;
  out.reserve(exponentials.size());
  double s = 0.0;
  for (double e : exponentials) {
    s += e;
    out.push_back(limit_transform(gamma, s));
  }
  return out;
}

inline std::vector<double> sample_limit_vector(double gamma, std::size_t k, Stream& rng) {
  if (k == 0) throw std::invalid_argument("sample_limit_vector: k must be >= 1");
  std::vector<double> e(k);
  for (auto& v : e) v = rng.exponential();
  return limit_vector_from(gamma, e);
}

// ---------------------------------------------------------------------------
// Normalizers

using QuantileFn = std::function<double(double)>;

class Normalizers {
 public:
  struct Pair {
    double a = 1.0;
    double b = 0.0;
  };

  Normalizers() = default;
  Normalizers(double gamma, double t, std::string descriptor)
      : gamma_(gamma), t_(t), descriptor_(std::move(descriptor)) {}

  void set(std::size_t n, double a, double b) {
    if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      throw std::domain_error("Normalizers: degenerate tail, a_N must be finite and > 0 (N=" + std::to_string(n) + ")");
    table_[n] = Pair{a, b};
  }

  const Pair& at(std::size_t n) const {
    auto it = table_.find(n);
    if (it == table_.end()) throw std::out_of_range("Normalizers: no entry for N=" + std::to_string(n));
    return it->second;
  }
  bool contains(std::size_t n) const { return table_.count(n) != 0; }
  double a(std::size_t n) const { return at(n).a; }
  double b(std::size_t n) const { return at(n).b; }

  double gamma() const noexcept { return gamma_; }
  double time() const noexcept { return t_; }
  const std::string& descriptor() const noexcept { return descriptor_; }
  const std::map<std::size_t, Pair>& table() const noexcept { return table_; }

 private:
  double gamma_ = 0.0;
  double t_ = 0.0;
  std::string descriptor_;
  std::map<std::size_t, Pair> table_;
};

/// b_N = Q(1 - 1/N), a_N = Q(1 - 1/(eN)) - b_N.
inline Normalizers normalizers_from_quantiles(const QuantileFn& quantile, double gamma, std::span<const std::size_t> ns,
                                              double t = 0.0, std::string descriptor = "") {
  Normalizers out(gamma, t, std::move(descriptor));
  for (std::size_t n : ns) {
    if (n < 2) throw std::invalid_argument("normalizers_from_quantiles: N must be >= 2");
    const double nd = static_cast<double>(n);
    const double b = quantile(1.0 - 1.0 / nd);
    const double a = quantile(1.0 - 1.0 / (std::numbers::e * nd)) - b;
    out.set(n, a, b);
  }
  return out;
}

inline QuantileFn gaussian_quantile_fn(double mean, double stddev) {
  return [mean, stddev](double p) { return mean + stddev * normal_quantile(p); };
}

/// Linearly interpolated quantiles of a sorted pilot sample (type-7 rule).
inline QuantileFn empirical_quantile_fn(std::vector<double> sorted) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile_fn: empty pilot");
  if (!std::is_sorted(sorted.begin(), sorted.end())) std::sort(sorted.begin(), sorted.end());
  return [s = std::move(sorted)](double p) {
    const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
}

inline void write_normalizers_csv(std::ostream& os, const Normalizers& nz) {
  os << "N,a_N,b_N\n";
  for (const auto& [n, pr] : nz.table()) os << n << ',' << io::format_double(pr.a) << ',' << io::format_double(pr.b) << '\n';
}

// ---------------------------------------------------------------------------
// Order statistics

struct OrderStats {
  std::vector<double> values;         // descending
  std::vector<std::size_t> indices;   // zero-based source positions
  std::size_t k() const noexcept { return values.size(); }
};

/// k largest values; ties go to the lower original index first.
inline OrderStats top_k(std::span<const double> values, std::size_t k) {
  if (k > values.size()) throw std::invalid_argument("top_k: k exceeds sample length");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto cmp = [&](std::size_t l, std::size_t r) {
    if (values[l] != values[r]) return values[l] > values[r];
    return l < r;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), cmp);
  OrderStats os;
  os.indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  os.values.reserve(k);
  for (std::size_t i : os.indices) os.values.push_back(values[i]);
  return os;
}

inline std::vector<double> normalize_top_k(const OrderStats& os, const Normalizers& nz, std::size_t n) {
  const auto& pr = nz.at(n);
  std::vector<double> out(os.values.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (os.values[j] - pr.b) / pr.a;
  return out;
}

// ---------------------------------------------------------------------------
// Point process

/// (a, b] x (c, d] with 0 <= a < b <= 1 and c < d; c and d may be infinite.
struct Rect {
  double a, b, c, d;

  Rect(double a_, double b_, double c_, double d_) : a(a_), b(b_), c(c_), d(d_) {
    if (!(0.0 <= a && a < b && b <= 1.0)) throw std::invalid_argument("Rect: need 0 <= a < b <= 1");
    if (std::isnan(c) || std::isnan(d) || !(c < d)) throw std::invalid_argument("Rect: need c < d");
  }

  bool contains(double u, double y) const noexcept { return a < u && u <= b && c < y && y <= d; }
};

/// Counts of particles i (one-based) with (i/N, (x_i - b_N)/a_N) in each rect.
inline std::vector<std::size_t> point_process_counts(std::span<const double> states, const Normalizers& nz,
                                                     std::size_t n, std::span<const Rect> rects) {
  if (states.size() != n) throw std::invalid_argument("point_process_counts: states length must equal N");
  const auto& pr = nz.at(n);
  std::vector<std::size_t> counts(rects.size(), 0);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i + 1) / nd;
    const double y = (states[i] - pr.b) / pr.a;
    for (std::size_t r = 0; r < rects.size(); ++r)
      if (rects[r].contains(u, y)) ++counts[r];
  }
  return counts;
}

/// nu(rect) = (b - a) * (tail(c) - tail(d)).
inline double poisson_intensity(double gamma, const Rect& r) {
  const double hc = gev_tail(gamma, r.c);
  const double hd = gev_tail(gamma, r.d);
  if (std::isinf(hc) && std::isinf(hd)) return 0.0;
  return (r.b - r.a) * (hc - hd);
}

}  // namespace nashevt
