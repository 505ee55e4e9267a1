#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nashevt/model.hpp"
#include "nashevt/quadrature.hpp"
#include "nashevt/riccati.hpp"
#include "nashevt/rng.hpp"

using namespace nashevt;

namespace {

LQParams benchmark() {
  LQParams p;
  p.a = 1.0;
  p.q = 0.0;
  p.eps = 1.0;
  p.c = 0.5;
  p.sigma = 0.7;
  p.T = 1.0;
  return p;
}

LQParams stationary() {
  LQParams p;
  p.a = 0.8;
  p.q = 0.6;
  p.eps = 0.36;  // eps = q^2
  p.c = 0.0;
  return p;
}

// Classical RK4 for eta' = A eta + B eta^2 - C, integrated backward with a
// tiny step. Written out independently from the library integrator.
double reference_eta0(double A, double B, double C, double c, double T, double h) {
  const auto steps = static_cast<long>(std::llround(T / h));
  long double eta = c;
  const long double hh = -static_cast<long double>(T) / steps;
  auto f = [&](long double e) { return A * e + B * e * e - C; };
  for (long k = 0; k < steps; ++k) {
    const long double k1 = f(eta);
    const long double k2 = f(eta + hh / 2 * k1);
    const long double k3 = f(eta + hh / 2 * k2);
    const long double k4 = f(eta + hh * k3);
    eta += hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return static_cast<double>(eta);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST(HatV, SymmetricQuadraticMinimizerAtOrigin) {
  LQParams p;
  p.q = 1.0;
  EXPECT_EQ(lq_hat_v(p, 0.0, 0.0, 0.0), 0.0);
}

TEST(HatV, CompletingTheSquare) {
  LQParams p;
  p.q = 1.0;
  EXPECT_EQ(lq_hat_v(p, 0.0, 1.0, 0.0), 1.0);
}

TEST(HatV, MatchesGridSearch) {
  LQParams p;
  p.q = 0.7;
  p.eps = 1.0;
  const double x = 0.3, mbar = -0.2, y = 0.4;
  auto objective = [&](double v) { return v * y + lq_f(p, x, mbar, v); };
  const int n = 100000;
  const double lo = -50.0, hi = 50.0, h = (hi - lo) / (n - 1);
  double best_v = lo, best = objective(lo);
  for (int k = 1; k < n; ++k) {
    const double v = lo + h * k;
    if (objective(v) < best) best = objective(v), best_v = v;
  }
  const double hv = lq_hat_v(p, x, mbar, y);
  EXPECT_NEAR(hv, best_v, h);
  EXPECT_LE(objective(hv), best + 1e-9);
}

TEST(HatV, BeatsGridSearchAtRandomPoints) {
  Stream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    LQParams p;
    p.q = 2.0 * rng.uniform() - 1.0;
    p.eps = p.q * p.q + rng.uniform();
    const double x = 4 * rng.uniform() - 2, mbar = 4 * rng.uniform() - 2, y = 4 * rng.uniform() - 2;
    auto objective = [&](double v) { return v * y + lq_f(p, x, mbar, v); };
    const double at_hat = objective(lq_hat_v(p, x, mbar, y));
    const int n = 100000;
    for (int k = 0; k < n; ++k) ASSERT_LE(at_hat, objective(-50.0 + 100.0 * k / (n - 1)) + 1e-9);
  }
}

TEST(ModelCoefficients, ReducedDriftAndCostUseSamePath) {
  const LQParams p = benchmark();
  const GameModel m = make_lq_coefficients(p);
  Stream rng(3);
  std::vector<double> atoms(50);
  for (double& z : atoms) z = rng.normal();
  EmpiricalMeasure emp(atoms);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = 3 * rng.normal(), y = 3 * rng.normal();
    const MeasureArg args[] = {MeasureArg{std::cref(emp)}, MeasureArg{ParametricLaw::gaussian(rng.normal(), 1.0)}};
    for (const auto& mu : args) {
      EXPECT_EQ(m.tilde_b(x, mu, y), m.b(x, mu, m.hat_v(x, mu, y)));
      EXPECT_EQ(m.tilde_f(x, mu, y), m.f(x, mu, m.hat_v(x, mu, y)));
    }
  }
}

TEST(ModelCoefficients, RejectsNonPositiveSigma) {
  LQParams p = benchmark();
  p.sigma = 0.0;
  EXPECT_THROW(make_lq_coefficients(p), std::invalid_argument);
  p.sigma = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(ModelCoefficients, RejectsEpsBelowQSquared) {
  LQParams p = benchmark();
  p.q = 2.0;
  p.eps = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(EmpiricalMeasureTest, SortedIsPermutationAndQuantilesConsistent) {
  Stream rng(5);
  std::vector<double> xs(101);
  for (double& v : xs) v = rng.normal();
  EmpiricalMeasure m(xs);
  std::vector<double> s(xs);
  std::sort(s.begin(), s.end());
  ASSERT_TRUE(std::equal(s.begin(), s.end(), m.sorted().begin()));
  EXPECT_EQ(m.quantile(1.0), s.back());
  EXPECT_EQ(m.quantile(0.5), s[50]);
  EXPECT_EQ(m.quantile(1e-9), s.front());
  EXPECT_THROW(m.quantile(0.0), std::domain_error);
  // Re-sorting after a small move uses the cached order and must agree.
  for (double& v : xs) v += 0.01 * rng.normal();
  m.reset(xs);
  s = xs;
  std::sort(s.begin(), s.end());
  EXPECT_TRUE(std::equal(s.begin(), s.end(), m.sorted().begin()));
}

TEST(ParametricLawTest, NegativeVarianceRejected) {
  EXPECT_THROW(ParametricLaw::gaussian(0.0, -1e-3), std::invalid_argument);
}

TEST(MeanFieldRiccati, StationaryCaseIsZero) {
  const LQParams p = stationary();
  const auto r = solve_mfg_riccati(p, TimeGrid(p.T, 100));
  for (double e : r.eta()) EXPECT_EQ(e, 0.0);
}

TEST(MeanFieldRiccati, PureQuadraticClosedForm) {
  LQParams p;
  p.a = -0.5;
  p.q = 0.5;
  p.eps = 0.25;
  p.c = 1.0;
  p.T = 1.0;
  const TimeGrid g(1.0, 1000);
  const auto r = solve_mfg_riccati(p, g);
  EXPECT_NEAR(r.eta()[0], 0.5, 1e-10);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(r.eta()[j], 1.0 / (1.0 + (1.0 - g[j])), 1e-10);
}

TEST(MeanFieldRiccati, AgreesWithFineReferenceIntegrator) {
  const LQParams p = benchmark();
  const auto r = solve_mfg_riccati(p, TimeGrid(p.T, 1000));
  const double ref = reference_eta0(2 * (p.a + p.q), 1.0, p.eps - p.q * p.q, p.c, p.T, 1e-6);
  EXPECT_NEAR(r.eta()[0], ref, 1e-8);
}

TEST(MeanFieldRiccati, TerminalValueIsExact) {
  for (double c : {0.0, 0.3, 0.5, 2.0}) {
    LQParams p = benchmark();
    p.c = c;
    EXPECT_EQ(solve_mfg_riccati(p, TimeGrid(p.T, 37)).eta().back(), c);
    EXPECT_EQ(solve_nplayer_riccati(p, 7, TimeGrid(p.T, 37)).eta().back(), c);
  }
}

TEST(MeanFieldRiccati, CapExceededIsReported) {
  // Valid parameters keep eta bounded backward in time; a strongly explosive
  // linear part drives it towards ~20, past a tight cap.
  LQParams p;
  p.a = -10.0;
  p.q = 0.0;
  p.eps = 1.0;
  p.c = 0.5;
  RiccatiOptions opts;
  opts.blowup_cap = 5.0;
  EXPECT_THROW(solve_mfg_riccati(p, TimeGrid(p.T, 1000), opts), NumericalFailure);
  EXPECT_THROW(solve_nplayer_riccati(p, 10, TimeGrid(p.T, 1000), opts), NumericalFailure);
  EXPECT_NO_THROW(solve_mfg_riccati(p, TimeGrid(p.T, 1000)));
}

TEST(MeanFieldRiccati, GridMustEndAtHorizon) {
  const LQParams p = benchmark();
  EXPECT_THROW(solve_mfg_riccati(p, TimeGrid(0.5, 50)), std::invalid_argument);
}

TEST(NPlayerRiccati, StationaryCaseIsZeroForEveryN) {
  const LQParams p = stationary();
  for (std::size_t n : {1u, 2u, 5u, 100u}) {
    const auto r = solve_nplayer_riccati(p, n, TimeGrid(p.T, 50));
    for (double e : r.eta()) EXPECT_EQ(e, 0.0);
  }
}

TEST(NPlayerRiccati, AgreesWithFineReferenceIntegrator) {
  const LQParams p = benchmark();
  const std::size_t n = 7;
  const auto r = solve_nplayer_riccati(p, n, TimeGrid(p.T, 1000));
  const double ref = reference_eta0(2 * (p.a + p.q), 1.0 - 1.0 / (n * n), p.eps - p.q * p.q, p.c, p.T, 1e-6);
  EXPECT_NEAR(r.eta()[0], ref, 1e-8);
}

TEST(NPlayerRiccati, GapToMeanFieldDecaysInN) {
  const LQParams p = benchmark();
  const TimeGrid g(p.T, 200);
  const auto mf = solve_mfg_riccati(p, g);
  auto gap = [&](std::size_t n) {
    const auto np = solve_nplayer_riccati(p, n, g);
    return max_abs_diff(np.eta(), mf.eta());
  };
  EXPECT_LE(gap(100), 10.0 * gap(200));
  double prev = gap(10);
  for (std::size_t n : {20u, 40u, 80u, 160u}) {
    const double cur = gap(n);
    EXPECT_LT(cur, prev) << "N = " << n;
    prev = cur;
  }
  // O(1/N^2) coefficient perturbation: N * gap stays bounded.
  EXPECT_LT(100 * gap(100), 1.0);
}

TEST(NPlayerRiccati, ZeroPlayersRejected) {
  const LQParams p = benchmark();
  EXPECT_THROW(solve_nplayer_riccati(p, 0, TimeGrid(p.T, 10)), std::invalid_argument);
}

TEST(MasterGradient, ZeroEtaGivesZero) {
  const LQParams p = stationary();
  const auto r = solve_mfg_riccati(p, TimeGrid(p.T, 10));
  EXPECT_EQ(master_Ux(r, 0.3, 2.0, MeasureArg{ParametricLaw::gaussian(-1.0, 1.0)}), 0.0);
}

TEST(MasterGradient, ZeroDisplacementGivesZero) {
  const TimeGrid g(1.0, 4);
  const RiccatiSolution r(RiccatiSolution::Kind::kMeanField, 0, benchmark(), g, std::vector<double>(5, 1.0),
                          std::vector<double>(5, 0.0));
  EXPECT_EQ(master_Ux(r, 0.6, 1.7, MeasureArg{ParametricLaw::gaussian(1.7, 2.0)}), 0.0);
}

TEST(MasterGradient, DirectFormula) {
  const TimeGrid g(1.0, 4);
  const RiccatiSolution r(RiccatiSolution::Kind::kMeanField, 0, benchmark(), g, std::vector<double>(5, 0.5),
                          std::vector<double>(5, 0.0));
  EXPECT_DOUBLE_EQ(master_Ux(r, 0.3, 0.0, MeasureArg{ParametricLaw::gaussian(2.0, 1.0)}), -1.0);
}

TEST(MasterGradient, LinearInterpolationBetweenNodes) {
  const TimeGrid g(1.0, 2);
  const RiccatiSolution r(RiccatiSolution::Kind::kMeanField, 0, benchmark(), g, {0.0, 1.0, 3.0}, {0.0, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(r.eta_at(0.75), 2.0);
  EXPECT_DOUBLE_EQ(master_Ux(r, 0.25, 0.0, MeasureArg{ParametricLaw::gaussian(1.0, 1.0)}), -0.5);
}

TEST(MasterGradient, OutsideHorizonIsRangeError) {
  const auto r = solve_mfg_riccati(benchmark(), TimeGrid(1.0, 10));
  const MeasureArg m{ParametricLaw::gaussian(0.0, 1.0)};
  EXPECT_THROW(master_Ux(r, -0.01, 0.0, m), std::out_of_range);
  EXPECT_THROW(master_Ux(r, 1.01, 0.0, m), std::out_of_range);
}

TEST(NPlayerGradient, ZeroEtaGivesZero) {
  const LQParams p = stationary();
  const auto r = solve_nplayer_riccati(p, 3, TimeGrid(p.T, 10));
  const std::vector<double> xs{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(nplayer_Uxi(r, 0.5, xs, i), 0.0);
}

TEST(NPlayerGradient, EqualStatesGiveZero) {
  const auto r = solve_nplayer_riccati(benchmark(), 4, TimeGrid(1.0, 10));
  const std::vector<double> xs(4, 0.37);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(nplayer_Uxi(r, 0.2, xs, i), 0.0);
}

TEST(NPlayerGradient, MatchesFiniteDifferenceOfValue) {
  const auto r = solve_nplayer_riccati(benchmark(), 5, TimeGrid(1.0, 100));
  Stream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(5);
    for (double& v : xs) v = 2 * rng.normal();
    const double t = 0.01 * static_cast<double>(rng() % 100);
    for (std::size_t i = 0; i < 5; ++i) {
      const double h = 1e-5;
      auto up = xs, dn = xs;
      up[i] += h;
      dn[i] -= h;
      const double fd = (nplayer_U(r, t, up, i) - nplayer_U(r, t, dn, i)) / (2 * h);
      EXPECT_NEAR(nplayer_Uxi(r, t, xs, i), fd, 1e-6);
    }
  }
}

TEST(NPlayerGradient, IndexOutOfBounds) {
  const auto r = solve_nplayer_riccati(benchmark(), 3, TimeGrid(1.0, 10));
  const std::vector<double> xs{0.0, 1.0, 2.0};
  EXPECT_THROW(nplayer_Uxi(r, 0.5, xs, 3), std::out_of_range);
  const std::vector<double> wrong{0.0, 1.0};
  EXPECT_THROW(nplayer_Uxi(r, 0.5, wrong, 0), std::invalid_argument);
}

TEST(Residuals, StationaryCaseVanishes) {
  const LQParams p = stationary();
  const TimeGrid g(p.T, 100);
  const auto mf = solve_mfg_riccati(p, g);
  const auto np = solve_nplayer_riccati(p, 4, g);
  // eta = 0 leaves only the constant sigma^2 term inside chi; chi is linear in t.
  Stream rng(2);
  for (int k = 0; k < 20; ++k) {
    const double t = g[1 + rng() % 98];
    std::vector<double> xs(4);
    for (double& v : xs) v = rng.normal();
    EXPECT_NEAR(residual_master(mf, t, rng.normal(), MeasureArg{ParametricLaw::gaussian(rng.normal(), 1.0)}), 0.0,
                1e-12);
    EXPECT_NEAR(residual_nplayer(np, t, xs, rng() % 4), 0.0, 1e-12);
  }
}

TEST(Residuals, BoundaryTimesRejected) {
  const auto mf = solve_mfg_riccati(benchmark(), TimeGrid(1.0, 10));
  const MeasureArg m{ParametricLaw::gaussian(0.0, 1.0)};
  EXPECT_THROW(residual_master(mf, 0.0, 0.0, m), std::domain_error);
  EXPECT_THROW(residual_master(mf, 1.0, 0.0, m), std::domain_error);
  EXPECT_THROW(residual_master(mf, 0.55, 0.0, m), std::invalid_argument);
  const auto np = solve_nplayer_riccati(benchmark(), 2, TimeGrid(1.0, 10));
  const std::vector<double> xs{0.0, 1.0};
  EXPECT_THROW(residual_nplayer(np, 0.0, xs, 0), std::domain_error);
}

namespace {

struct EvalPoint {
  double t;
  double x;
  double mbar;
  std::vector<double> states;
  std::size_t i;
};

std::vector<EvalPoint> eval_points(std::size_t n, int count) {
  Stream rng(99);
  std::vector<EvalPoint> pts;
  for (int k = 0; k < count; ++k) {
    EvalPoint e;
    e.t = 0.05 * static_cast<double>(1 + rng() % 19);  // node of every grid with dt | 0.05
    e.x = 2 * rng.normal();
    e.mbar = rng.normal();
    e.states.resize(n);
    for (double& v : e.states) v = 2 * rng.normal();
    e.i = rng() % n;
    pts.push_back(std::move(e));
  }
  return pts;
}

}  // namespace

TEST(Residuals, NPlayerBelowTenDtAtRandomPoints) {
  const LQParams p = benchmark();
  const double dt = 0.01;
  const auto np = solve_nplayer_riccati(p, 5, TimeGrid::with_step(p.T, dt));
  for (const auto& e : eval_points(5, 100)) EXPECT_LT(std::abs(residual_nplayer(np, e.t, e.states, e.i)), 10 * dt);
}

TEST(Residuals, SecondOrderUnderRefinement) {
  const LQParams p = benchmark();
  const auto pts = eval_points(5, 30);
  auto max_res = [&](double dt) {
    const TimeGrid g = TimeGrid::with_step(p.T, dt);
    const auto mf = solve_mfg_riccati(p, g);
    const auto np = solve_nplayer_riccati(p, 5, g);
    double rm = 0.0, rn = 0.0;
    for (const auto& e : pts) {
      rm = std::max(rm, std::abs(residual_master(mf, e.t, e.x, MeasureArg{ParametricLaw::gaussian(e.mbar, 1.0)})));
      rn = std::max(rn, std::abs(residual_nplayer(np, e.t, e.states, e.i)));
    }
    return std::pair{rm, rn};
  };
  const auto [m1, n1] = max_res(0.05);
  const auto [m2, n2] = max_res(0.025);
  const auto [m3, n3] = max_res(0.0125);
  EXPECT_NEAR(m1 / m2, 4.0, 0.6);
  EXPECT_NEAR(m2 / m3, 4.0, 0.6);
  EXPECT_NEAR(n1 / n2, 4.0, 0.6);
  EXPECT_NEAR(n2 / n3, 4.0, 0.6);
}

TEST(Residuals, PerturbedEtaIsDetected) {
  const LQParams p = benchmark();
  const TimeGrid g(p.T, 100);
  const auto mf = solve_mfg_riccati(p, g).perturbed(0.1);
  const auto np = solve_nplayer_riccati(p, 5, g).perturbed(0.1);
  for (const auto& e : eval_points(5, 30)) {
    if (std::abs(e.x - e.mbar) < 0.2) continue;  // the quadratic term carries the perturbation
    EXPECT_GT(std::abs(residual_master(mf, e.t, e.x, MeasureArg{ParametricLaw::gaussian(e.mbar, 1.0)})), 1e-3);
  }
  std::size_t detected = 0;
  for (const auto& e : eval_points(5, 30))
    if (std::abs(residual_nplayer(np, e.t, e.states, e.i)) > 1e-3) ++detected;
  EXPECT_GE(detected, 25u);
}

TEST(Residuals, EmpiricalMeasureArgument) {
  const LQParams p = benchmark();
  const auto mf = solve_mfg_riccati(p, TimeGrid(p.T, 400));
  Stream rng(8);
  std::vector<double> atoms(64);
  for (double& z : atoms) z = rng.normal();
  EmpiricalMeasure emp(atoms);
  EXPECT_LT(std::abs(residual_master(mf, 0.5, 0.7, MeasureArg{std::cref(emp)})), 1e-3);
}

TEST(MeasureDerivative, VanishesWithoutDrift) {
  LQParams p;
  p.a = -0.5;
  p.q = 0.5;
  p.eps = 0.25;
  p.c = 0.0;
  const auto mf = solve_mfg_riccati(p, TimeGrid(p.T, 10));
  const auto law = ParametricLaw::gaussian(0.0, 1.0);
  for (double z : {-3.0, 0.0, 2.5}) EXPECT_EQ(drift_measure_derivative_lq(mf, 0.4, 1.0, law, z), 0.0);
}

TEST(MeasureDerivative, ZeroSignedMeasureGivesZero) {
  const auto mf = solve_mfg_riccati(benchmark(), TimeGrid(1.0, 10));
  const auto law = ParametricLaw::gaussian(0.0, 1.0);
  for (double u : {-1.0, 0.0, 4.2}) {
    const double k = drift_measure_derivative_lq(mf, 0.3, 0.0, law, u);
    EXPECT_EQ(k - k, 0.0);
  }
}

TEST(MeasureDerivative, IntegralAgainstSampleMinusLaw) {
  const LQParams p = benchmark();
  const auto mf = solve_mfg_riccati(p, TimeGrid(p.T, 100));
  const auto law = ParametricLaw::gaussian(0.3, 1.7);
  Stream rng(21);
  std::vector<double> atoms(500);
  for (double& z : atoms) z = 0.3 + std::sqrt(1.7) * rng.normal();
  EmpiricalMeasure emp(atoms);
  const double t = 0.4;
  const double got = integrate_against_difference(
      [&](double z) { return drift_measure_derivative_lq(mf, t, 0.0, law, z); }, emp, law);
  double mean = 0.0;
  for (double z : atoms) mean += z;
  mean /= static_cast<double>(atoms.size());
  EXPECT_NEAR(got, (p.a + p.q + mf.eta_at(t)) * (mean - 0.3), 1e-12);
}

TEST(RiccatiCsv, HeaderAndRows) {
  const auto r = solve_mfg_riccati(benchmark(), TimeGrid(1.0, 4));
  std::ostringstream os;
  write_riccati_csv(os, r);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("t,eta\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 6);
}
