#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "nashevt/evt.hpp"
#include "nashevt/lamperti.hpp"
#include "nashevt/riccati.hpp"

using namespace nashevt;

namespace {

// Composite Simpson rule for the integral of 1/(2 + sin z) over [0, x].
double simpson_inverse_sigma(double x, int intervals = 200000) {
  const double h = x / intervals;
  auto f = [](double z) { return 1.0 / (2.0 + std::sin(z)); };
  double s = f(0.0) + f(x);
  for (int k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * f(k * h);
  return s * h / 3.0;
}

const ScalingMap& sine_map() {
  static const ScalingMap s = build_scaling(VolatilityProfile::sinusoidal(2.0, 1.0), -10.0, 10.0);
  return s;
}

}  // namespace

TEST(ScalingMapTest, UnitVolatilityIsIdentity) {
  const auto s = build_scaling(VolatilityProfile::constant(1.0), -5.0, 5.0);
  EXPECT_TRUE(s.affine());
  for (double x : {-5.0, -1.3, 0.0, 2.7, 5.0}) {
    EXPECT_EQ(s.forward(x), x);
    EXPECT_EQ(s.inverse(x), x);
  }
}

TEST(ScalingMapTest, DoubleVolatilityHalves) {
  const auto s = build_scaling(VolatilityProfile::constant(2.0), -5.0, 5.0);
  EXPECT_EQ(s.forward(3.0), 1.5);
  EXPECT_EQ(s.inverse(1.5), 3.0);
  EXPECT_EQ(s.range_hi(), 2.5);
  EXPECT_EQ(s.derivative(1.0), 0.5);
}

TEST(ScalingMapTest, SineProfileRoundTrip) {
  const auto& s = sine_map();
  Stream rng(1000);
  for (int k = 0; k < 1000; ++k) {
    const double u = s.range_lo() + (s.range_hi() - s.range_lo()) * rng.uniform();
    ASSERT_NEAR(s.forward(s.inverse(u)), u, 1e-8);
    const double x = -10.0 + 20.0 * rng.uniform();
    ASSERT_NEAR(s.inverse(s.forward(x)), x, 1e-8);
  }
  EXPECT_LE(round_trip_error(s, 1000, 5), 1e-8);
}

TEST(ScalingMapTest, ForwardMatchesIndependentQuadrature) {
  const auto& s = sine_map();
  EXPECT_EQ(s.forward(0.0), 0.0);
  for (double x : {-9.7, -3.0, -0.4, 0.9, 4.2, 10.0}) EXPECT_NEAR(s.forward(x), simpson_inverse_sigma(x), 1e-10) << x;
}

TEST(ScalingMapTest, StrictlyIncreasingOnGrid) {
  const auto& s = sine_map();
  double prev = s.forward(-10.0);
  for (int k = 1; k <= 20000; ++k) {
    const double cur = s.forward(-10.0 + 20.0 * k / 20000.0);
    ASSERT_LT(prev, cur);
    prev = cur;
  }
}

TEST(ScalingMapTest, FiniteDifferenceMatchesInverseSigma) {
  const auto& s = sine_map();
  Stream rng(3);
  for (int k = 0; k < 200; ++k) {
    const double x = -9.0 + 18.0 * rng.uniform();
    const double h = 1e-5;
    const double fd = (s.forward(x + h) - s.forward(x - h)) / (2 * h);
    EXPECT_NEAR(fd, 1.0 / (2.0 + std::sin(x)), 1e-6);
    EXPECT_EQ(s.derivative(x), 1.0 / (2.0 + std::sin(x)));
  }
}

TEST(ScalingMapTest, OutsideIntervalIsRangeError) {
  const auto& s = sine_map();
  EXPECT_THROW(s.forward(10.5), std::out_of_range);
  EXPECT_THROW(s.inverse(s.range_hi() + 0.1), std::out_of_range);
  EXPECT_THROW(s.derivative(-11.0), std::out_of_range);
}

TEST(ScalingMapTest, NonPositiveVolatilityRejected) {
  VolatilityProfile bad{[](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 0.1, 1.0};
  EXPECT_THROW(build_scaling(bad, -1.0, 1.0), std::domain_error);
  EXPECT_THROW(build_scaling(VolatilityProfile::sinusoidal(1.0, 2.0), -1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(build_scaling(VolatilityProfile::constant(1.0), 0.5, 1.0), std::invalid_argument);
  // Declared bounds that the profile violates.
  VolatilityProfile loose{[](double x) { return 2.0 + std::sin(x); }, [](double x) { return std::cos(x); }, 1.5, 2.5};
  EXPECT_THROW(build_scaling(loose, -3.0, 3.0), std::domain_error);
}

TEST(ScalingMapTest, CsvDump) {
  std::ostringstream os;
  write_scaling_csv(os, sine_map(), 11);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("x,S(x)\n-10,", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 12);
}

TEST(Pushforward, IdentityMap) {
  const std::vector<double> atoms{0.3, -1.0, 2.0};
  const EmpiricalMeasure m(atoms);
  const auto out = pushforward_measure(m, [](double x) { return x; });
  EXPECT_TRUE(std::equal(out.samples().begin(), out.samples().end(), atoms.begin()));
}

TEST(Pushforward, Doubling) {
  const std::vector<double> atoms{0.0, 1.0};
  const auto out = pushforward_measure(EmpiricalMeasure(atoms), [](double x) { return 2 * x; });
  EXPECT_EQ(out.samples()[0], 0.0);
  EXPECT_EQ(out.samples()[1], 2.0);
}

TEST(Pushforward, MeanOfMappedSamples) {
  Stream rng(2);
  std::vector<double> atoms(100);
  for (double& v : atoms) v = rng.normal();
  const auto& s = sine_map();
  const auto out = pushforward_measure(EmpiricalMeasure(atoms), [&](double x) { return s.forward(x); });
  double mean = 0.0;
  for (double v : atoms) mean += s.forward(v);
  EXPECT_NEAR(out.mean(), mean / 100.0, 1e-14);
  EXPECT_THROW(pushforward_measure(EmpiricalMeasure(std::vector<double>{11.0}), [&](double x) { return s.forward(x); }),
               std::out_of_range);
}

TEST(TransformModel, UnitVolatilityLeavesModelUnchanged) {
  LQParams p;
  const auto mf = solve_mfg_riccati(p, TimeGrid(p.T, 10));
  const GameModel base = make_lq_model(p, mf);
  const auto prof = VolatilityProfile::constant(1.0);
  const GameModel t = transform_model(base, prof, build_scaling(prof, -20.0, 20.0));
  Stream rng(4);
  std::vector<double> atoms(20);
  for (double& z : atoms) z = rng.normal();
  const EmpiricalMeasure emp(atoms);
  for (int k = 0; k < 100; ++k) {
    const double x = 3 * rng.normal(), v = rng.normal(), y = rng.normal();
    for (const MeasureArg& m : {MeasureArg{std::cref(emp)}, MeasureArg{ParametricLaw::gaussian(0.4, 1.3)}}) {
      EXPECT_DOUBLE_EQ(t.b(x, m, v), base.b(x, m, v));
      EXPECT_DOUBLE_EQ(t.f(x, m, v), base.f(x, m, v));
      EXPECT_DOUBLE_EQ(t.g(x, m), base.g(x, m));
      EXPECT_DOUBLE_EQ(t.hat_v(x, m, y), base.hat_v(x, m, y));
      EXPECT_DOUBLE_EQ(t.tilde_b(x, m, y), base.tilde_b(x, m, y));
    }
  }
}

TEST(TransformModel, ConstantVolatilityHasNoCorrection) {
  GameModel zero;
  zero.b = [](double, const MeasureArg&, double) { return 0.0; };
  zero.f = [](double, const MeasureArg&, double v) { return 0.5 * v * v; };
  zero.g = [](double, const MeasureArg&) { return 0.0; };
  zero.hat_v = [](double, const MeasureArg&, double y) { return -y; };
  const auto prof = VolatilityProfile::constant(2.0);
  const GameModel t = transform_model(zero, prof, build_scaling(prof, -10.0, 10.0));
  const MeasureArg m{ParametricLaw::gaussian(0.0, 1.0)};
  for (double u : {-4.0, 0.0, 1.7}) EXPECT_EQ(t.b(u, m, 0.0), 0.0);
  // A control v enters the transformed drift as v / sigma.
  EXPECT_EQ(t.b(1.0, m, 3.0), 0.0);
  EXPECT_EQ(t.f(1.0, m, 3.0), 4.5);
}

TEST(TransformModel, SineProfileComposition) {
  LQParams p;
  const GameModel base = make_lq_coefficients(p);
  const auto prof = VolatilityProfile::sinusoidal(2.0, 1.0);
  const auto& s = sine_map();
  const GameModel t = transform_model(base, prof, s);
  Stream rng(6);
  std::vector<double> u_atoms(15);
  for (double& z : u_atoms) z = rng.normal();
  const EmpiricalMeasure mu(u_atoms);
  std::vector<double> x_atoms;
  for (double z : u_atoms) x_atoms.push_back(s.inverse(z));
  const EmpiricalMeasure mx(x_atoms);
  for (int k = 0; k < 50; ++k) {
    const double u = 2 * rng.normal(), v = rng.normal();
    const double x = s.inverse(u);
    const double want = base.b(x, MeasureArg{std::cref(mx)}, v) / (2.0 + std::sin(x)) - 0.5 * std::cos(x);
    EXPECT_NEAR(t.b(u, MeasureArg{std::cref(mu)}, v), want, 1e-12);
    EXPECT_NEAR(t.f(u, MeasureArg{std::cref(mu)}, v), base.f(x, MeasureArg{std::cref(mx)}, v), 1e-12);
  }
  // Gaussian laws do not stay Gaussian under a nonlinear map.
  EXPECT_THROW(t.b(0.0, MeasureArg{ParametricLaw::gaussian(0.0, 1.0)}, 0.0), std::invalid_argument);
  EXPECT_THROW(t.b(50.0, MeasureArg{std::cref(mu)}, 0.0), std::out_of_range);
}

TEST(TransformNormalizers, UnitVolatilityUnchanged) {
  const std::size_t ns[] = {100, 1000};
  const auto nz = normalizers_from_quantiles(gaussian_quantile_fn(0.0, 1.0), 0.0, ns);
  const auto s = build_scaling(VolatilityProfile::constant(1.0), -10.0, 10.0);
  const auto out = transform_normalizers(nz, s);
  for (std::size_t n : ns) {
    EXPECT_EQ(out.a(n), nz.a(n));
    EXPECT_EQ(out.b(n), nz.b(n));
  }
  EXPECT_EQ(out.gamma(), nz.gamma());
}

TEST(TransformNormalizers, DoubleVolatilityHalves) {
  const std::size_t ns[] = {100};
  const auto nz = normalizers_from_quantiles(gaussian_quantile_fn(0.0, 1.0), 0.0, ns);
  const auto out = transform_normalizers(nz, build_scaling(VolatilityProfile::constant(2.0), -10.0, 10.0));
  EXPECT_EQ(out.a(100), nz.a(100) / 2);
  EXPECT_EQ(out.b(100), nz.b(100) / 2);
}

TEST(TransformNormalizers, LocationOutsideIntervalIsRangeError) {
  Normalizers nz(0.0, 0.0, "");
  nz.set(10, 1.0, 20.0);
  EXPECT_THROW(transform_normalizers(nz, sine_map()), std::out_of_range);
}

TEST(TransformNormalizers, PairedMaximaPanel) {
  const auto r = normalizer_panel_check(sine_map(), 1000, 10000, 123);
  EXPECT_EQ(r.replications, 10000u);
  EXPECT_LE(r.gap, 0.02);
}

TEST(OrderStatistics, CommuteWithMonotoneMap) {
  Stream rng(8);
  std::vector<double> x(500), u(500);
  for (std::size_t i = 0; i < 500; ++i) {
    x[i] = 2 * rng.normal();
    u[i] = sine_map().forward(x[i]);
  }
  const auto a = top_k(x, 10), b = top_k(u, 10);
  EXPECT_EQ(a.indices, b.indices);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(b.values[j], sine_map().forward(a.values[j]));
}

TEST(StrongGap, UnitVolatilityGapsVanish) {
  const auto s = build_scaling(VolatilityProfile::constant(1.0), -10.0, 10.0);
  StrongGapSpec spec;
  spec.drift = [](double x) { return -x; };
  spec.paths = 200;
  const auto r = lamperti_strong_gap(s, spec);
  for (double g : r.gap_euler) EXPECT_LE(g, 1e-12);
  for (double g : r.gap_milstein) EXPECT_LE(g, 1e-12);
}

TEST(StrongGap, SineProfileGapHalvesWithStep) {
  StrongGapSpec spec;
  spec.drift = [](double x) { return -x; };
  spec.paths = 2000;
  spec.seed = 4;
  const auto r = lamperti_strong_gap(sine_map(), spec);
  ASSERT_EQ(r.gap_milstein.size(), 3u);
  EXPECT_TRUE(r.failures.empty());
  for (std::size_t k = 1; k < 3; ++k) EXPECT_NEAR(r.gap_milstein[k - 1] / r.gap_milstein[k], 2.0, 0.5);
  // The Euler discretization of the original equation converges more slowly.
  EXPECT_GT(r.gap_euler[2], r.gap_milstein[2]);
}

TEST(StrongGap, StepsMustNest) {
  StrongGapSpec spec;
  spec.drift = [](double x) { return -x; };
  spec.dts = {0.03, 0.02};
  EXPECT_THROW(lamperti_strong_gap(sine_map(), spec), std::invalid_argument);
  spec.dts = {};
  EXPECT_THROW(lamperti_strong_gap(sine_map(), spec), std::invalid_argument);
}

TEST(StrongGap, WorkerCountDoesNotChangeGaps) {
  StrongGapSpec spec;
  spec.drift = [](double x) { return -x; };
  spec.paths = 100;
  const auto a = lamperti_strong_gap(sine_map(), spec);
  spec.workers = 4;
  const auto b = lamperti_strong_gap(sine_map(), spec);
  EXPECT_EQ(a.gap_milstein, b.gap_milstein);
  EXPECT_EQ(a.gap_euler, b.gap_euler);
}
