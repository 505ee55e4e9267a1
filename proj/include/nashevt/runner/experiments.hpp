#pragma once

// One driver per experiment kind. Each returns a Report whose CSV and
// summary depend only on the configuration (never on the worker count).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashevt/diagnostics.hpp"
#include "nashevt/evt.hpp"
#include "nashevt/io.hpp"
#include "nashevt/lamperti.hpp"
#include "nashevt/parallel.hpp"
#include "nashevt/particle_sim.hpp"
#include "nashevt/riccati.hpp"
#include "nashevt/rng.hpp"
#include "nashevt/runner/config.hpp"
#include "nashevt/runner/report.hpp"
#include "nashevt/runner/svg.hpp"
#include "nashevt/stats.hpp"

namespace nashevt::runner {

using io::format_double;

namespace detail {

inline std::vector<std::uint64_t> replication_seeds(std::uint64_t master, std::size_t reps) {
  std::vector<std::uint64_t> out(reps);
  for (std::size_t r = 0; r < reps; ++r) out[r] = derive_seed(master, static_cast<std::uint64_t>(r));
  return out;
}

inline std::uint64_t noise_tag_for(const ExperimentConfig& cfg, System s) {
  return cfg.shared_noise ? 0 : static_cast<std::uint64_t>(s) + 1;
}

inline SimConfig sim_config(const ExperimentConfig& cfg, std::size_t n, std::size_t rep, std::vector<System> systems,
                            bool terminal_only) {
  SimConfig sc;
  sc.N = n;
  sc.dt = cfg.dt;
  sc.T = cfg.t;
  sc.master_seed = cfg.seed;
  sc.replication = rep;
  sc.systems = std::move(systems);
  sc.shared_noise = cfg.shared_noise;
  sc.record_stride = terminal_only ? sc.grid().steps() : cfg.record_stride;
  return sc;
}

inline std::string riccati_csv(const RiccatiSolution& r) {
  std::ostringstream os;
  write_riccati_csv(os, r);
  return os.str();
}

inline std::string normalizers_csv(const Normalizers& nz) {
  std::ostringstream os;
  write_normalizers_csv(os, nz);
  return os.str();
}

inline nlohmann::json series_json(const ScalingSeries& s) {
  return {{"name", s.name},
          {"x", s.x},
          {"y", s.y},
          {"y_stderr", s.y_stderr},
          {"replications", s.replications},
          {"failures", s.failures},
          {"slope", s.fit.slope},
          {"intercept", s.fit.intercept},
          {"slope_stderr", s.fit.stderr_slope},
          {"residual_norm", s.fit.residual_norm}};
}

inline PlotSeries fitted_line(const ScalingSeries& s, const char* color) {
  PlotSeries line;
  line.name = s.name + " fit " + io::format_fixed(s.fit.slope, 3);
  line.points = false;
  line.line = true;
  line.color = color;
  if (s.x.size() >= 2)
    for (double x : {s.x.front(), s.x.back()}) {
      line.x.push_back(x);
      line.y.push_back(std::exp(s.fit.intercept + s.fit.slope * std::log(x)));
    }
  return line;
}

inline void long_row(std::ostringstream& os, const std::string& diag, std::size_t n, std::size_t rep, double t,
                     double value) {
  os << diag << ',' << n << ',' << rep << ',' << format_double(t) << ',' << format_double(value) << '\n';
}

inline constexpr const char* kLongHeader = "diagnostic,N,rep,t,value\n";

}  // namespace detail

// ---------------------------------------------------------------------------

inline Report run_evt_topk(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
  const RiccatiSolution nplayer = solve_nplayer_riccati(cfg.model, cfg.N, setup.mean_field.grid());
  const ParametricLaw law = setup.flow.law_at(cfg.t);
  const std::size_t ns[] = {cfg.N};
  const Normalizers nz = normalizers_from_quantiles(gaussian_quantile_fn(law.mean, law.stddev()), cfg.gamma, ns,
                                                    cfg.t, "gaussian law of the representative player");
  const ParametricLaw mu0 = cfg.model.initial_law();

  struct Vectors {
    std::vector<double> nash, iid;
  };
  auto batch = run_replications<Vectors>(cfg.R, cfg.workers, [&](std::size_t r) {
    const SimConfig sc = detail::sim_config(cfg, cfg.N, r, {System::kNash, System::kIid}, true);
    const BrownianPanel pn = sample_brownian_panel(sc, mu0, detail::noise_tag_for(cfg, System::kNash));
    const BrownianPanel pi = cfg.shared_noise ? pn : sample_brownian_panel(sc, mu0, detail::noise_tag_for(cfg, System::kIid));
    const ParticleEnsemble en = simulate_nash(sc, setup.model, nplayer, pn);
    const ParticleEnsemble ei = simulate_iid(sc, setup.model, setup.mean_field, setup.flow, pi);
    return Vectors{normalize_top_k(top_k(en.terminal(), cfg.k), nz, cfg.N),
                   normalize_top_k(top_k(ei.terminal(), cfg.k), nz, cfg.N)};
  });
  rep.absorb(batch);
  rep.replication_seeds = detail::replication_seeds(cfg.seed, cfg.R);

  std::vector<std::vector<double>> limit(cfg.R);
  for (std::size_t r = 0; r < cfg.R; ++r) {
    Stream rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(StreamTag::kLimitSampler)));
    limit[r] = sample_limit_vector(cfg.gamma, cfg.k, rng);
  }

  std::ostringstream csv;
  csv << "rep,source,component,value\n";
  std::vector<std::vector<double>> nash(cfg.k), iid(cfg.k), lim(cfg.k);
  for (std::size_t r = 0; r < cfg.R; ++r) {
    if (batch.results[r])
      for (std::size_t j = 0; j < cfg.k; ++j) {
        csv << r << ",nash," << j + 1 << ',' << format_double(batch.results[r]->nash[j]) << '\n';
        csv << r << ",iid," << j + 1 << ',' << format_double(batch.results[r]->iid[j]) << '\n';
        nash[j].push_back(batch.results[r]->nash[j]);
        iid[j].push_back(batch.results[r]->iid[j]);
      }
    for (std::size_t j = 0; j < cfg.k; ++j) {
      csv << r << ",limit," << j + 1 << ',' << format_double(limit[r][j]) << '\n';
      lim[j].push_back(limit[r][j]);
    }
  }
  rep.csv = csv.str();

  const double ks_max = cfg.check_ks > 0 ? cfg.check_ks : 0.05;
  const double ks_limit_max = cfg.check_ks_limit > 0 ? cfg.check_ks_limit : 0.08;
  nlohmann::json comps = nlohmann::json::array();
  if (!nash[0].empty()) {
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const auto cdf = [&](double x) { return limit_component_cdf(cfg.gamma, j + 1, x); };
      const SampleSummary sn = summarize(nash[j]), si = summarize(iid[j]);
      const double d_ni = ks_two_sample(nash[j], iid[j]);
      const double d_iid_exact = ks_statistic(iid[j], cdf);
      comps.push_back({{"component", j + 1},
                       {"nash_mean", sn.mean},
                       {"nash_mean_stderr", sn.stderr_mean},
                       {"iid_mean", si.mean},
                       {"iid_mean_stderr", si.stderr_mean},
                       {"ks_nash_vs_limit", ks_two_sample(nash[j], lim[j])},
                       {"ks_iid_vs_limit", ks_two_sample(iid[j], lim[j])},
                       {"ks_nash_vs_iid", d_ni},
                       {"ks_nash_vs_iid_pvalue", ks_two_sample_pvalue(d_ni, nash[j].size(), iid[j].size())},
                       {"ks_nash_vs_limit_cdf", ks_statistic(nash[j], cdf)},
                       {"ks_iid_vs_limit_cdf", d_iid_exact}});
      rep.add_check("ks_nash_vs_iid_component_" + std::to_string(j + 1), d_ni <= ks_max, d_ni,
                    "<= " + format_double(ks_max));
      if (j == 0)
        rep.add_check("ks_iid_component_1_vs_gev", d_iid_exact <= ks_limit_max, d_iid_exact,
                      "<= " + format_double(ks_limit_max));
    }
  }
  rep.summary["N"] = cfg.N;
  rep.summary["k"] = cfg.k;
  rep.summary["t"] = cfg.t;
  rep.summary["gamma"] = cfg.gamma;
  rep.summary["a_N"] = nz.a(cfg.N);
  rep.summary["b_N"] = nz.b(cfg.N);
  rep.summary["components"] = comps;
  rep.extra_text["normalizers.csv"] = detail::normalizers_csv(nz);
  rep.extra_text["riccati.csv"] = detail::riccati_csv(setup.mean_field);

  Plot plot;
  plot.title = "Top order statistic: empirical CDF";
  plot.xlabel = "normalized value";
  plot.ylabel = "CDF";
  auto ecdf = [](std::vector<double> v, const std::string& name, const char* color) {
    std::sort(v.begin(), v.end());
    PlotSeries s;
    s.name = name;
    s.points = false;
    s.line = true;
    s.color = color;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s.x.push_back(v[i]);
      s.y.push_back(static_cast<double>(i + 1) / static_cast<double>(v.size()));
    }
    return s;
  };
  if (!nash[0].empty()) {
    plot.series.push_back(ecdf(nash[0], "nash", palette(0)));
    plot.series.push_back(ecdf(iid[0], "iid", palette(1)));
    PlotSeries g;
    g.name = "limit law";
    g.points = false;
    g.line = true;
    g.color = palette(2);
    const double lo = gev_quantile(cfg.gamma, 0.001), hi = gev_quantile(cfg.gamma, 0.999);
    for (int s = 0; s <= 200; ++s) {
      const double x = lo + (hi - lo) * s / 200.0;
      g.x.push_back(x);
      g.y.push_back(gev_cdf(cfg.gamma, x));
    }
    plot.series.push_back(g);
  }
  rep.svg = render_svg(plot);
  return rep;
}

// ---------------------------------------------------------------------------

inline Report run_scaling(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  std::ostringstream csv;
  csv << detail::kLongHeader;
  Plot plot;
  plot.logx = plot.logy = true;
  plot.xlabel = "N";
  nlohmann::json series = nlohmann::json::array();
  rep.replication_seeds = detail::replication_seeds(cfg.seed, cfg.R);

  auto write_rows = [&](const ScalingStudy& st, const std::vector<std::size_t>& ladder, const std::string& diag) {
    for (std::size_t k = 0; k < ladder.size(); ++k)
      for (std::size_t r = 0; r < st.values[k].size(); ++r)
        if (!std::isnan(st.values[k][r])) detail::long_row(csv, diag, ladder[k], r, cfg.t, st.values[k][r]);
  };
  auto add_series = [&](const ScalingSeries& s, std::size_t color) {
    PlotSeries pts;
    pts.name = s.name;
    pts.x = s.x;
    pts.y = s.y;
    pts.color = palette(color);
    plot.series.push_back(pts);
    if (s.x.size() >= 2) plot.series.push_back(detail::fitted_line(s, palette(color)));
    series.push_back(detail::series_json(s));
  };

  ScalingSpec spec;
  spec.ladder = cfg.ladder;
  spec.reps = cfg.R;
  spec.t = cfg.t;
  spec.dt = cfg.dt;
  spec.master_seed = cfg.seed;
  spec.workers = cfg.workers;

  if (cfg.mode == "synthetic") {
    ScalingSeries s;
    s.name = "synthetic";
    for (std::size_t n : cfg.ladder) {
      const double y = std::pow(static_cast<double>(n), -0.5);
      s.add(static_cast<double>(n), y, 0.0, 1, 0);
      detail::long_row(csv, "synthetic", n, 0, cfg.t, y);
    }
    s.refit();
    add_series(s, 0);
    const double tol = cfg.check_slope_tol > 0 ? cfg.check_slope_tol : 1e-9;
    rep.add_check("synthetic_slope", std::abs(s.fit.slope + 0.5) <= tol, s.fit.slope,
                  "-0.5 +/- " + format_double(tol));
    plot.title = "Synthetic scaling check";
    plot.ylabel = "y";
  } else if (cfg.mode == "wasserstein") {
    const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
    const double target = -cfg.p / 2.0;
    const double tol = cfg.check_slope_tol > 0 ? cfg.check_slope_tol : 0.1 * cfg.p;
    std::size_t color = 0;
    for (System sys : cfg.systems) {
      spec.name = "W1^" + format_double(cfg.p) + " " + std::string(to_string(sys));
      const ScalingStudy st = wasserstein_scaling(sys, setup, spec, cfg.p);
      rep.attempted += st.attempted;
      rep.failures.insert(rep.failures.end(), st.failures.begin(), st.failures.end());
      const std::string diag = "wasserstein_p" + format_double(cfg.p) + "_" + std::string(to_string(sys));
      write_rows(st, cfg.ladder, diag);
      add_series(st.series, color++);
      const bool fitted = st.series.x.size() >= 2;
      rep.add_check("slope_" + diag, fitted && std::abs(st.series.fit.slope - target) <= tol,
                    fitted ? st.series.fit.slope : std::nan(""),
                    format_double(target) + " +/- " + format_double(tol));
    }
    plot.title = "Wasserstein distance to the limit law";
    plot.ylabel = "mean W1^p";
  } else {
    const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
    spec.name = "max drift gap";
    const ScalingStudy st = driftgap_scaling(setup, spec);
    rep.attempted += st.attempted;
    rep.failures.insert(rep.failures.end(), st.failures.begin(), st.failures.end());
    write_rows(st, cfg.ladder, "driftgap");
    add_series(st.series, 0);
    const double tol = cfg.check_slope_tol > 0 ? cfg.check_slope_tol : 0.3;
    const bool fitted = st.series.x.size() >= 2;
    rep.add_check("slope_driftgap", fitted && std::abs(st.series.fit.slope + 1.0) <= tol,
                  fitted ? st.series.fit.slope : std::nan(""), "-1 +/- " + format_double(tol));
    std::vector<double> scaled;
    for (std::size_t k = 0; k < st.series.x.size(); ++k) scaled.push_back(st.series.x[k] * st.series.y[k]);
    bool bounded = !scaled.empty();
    double worst = 0.0;
    for (std::size_t k = 1; k < scaled.size(); ++k) {
      worst = std::max(worst, scaled[k] / scaled[k - 1]);
      if (scaled[k] > 1.5 * scaled[k - 1]) bounded = false;
    }
    rep.summary["N_times_gap"] = scaled;
    rep.add_check("N_times_gap_nonincreasing", bounded, worst, "successive ratio <= 1.5");
    plot.title = "Drift gap between N-player and mean-field feedback";
    plot.ylabel = "max over replications";
  }
  rep.summary["mode"] = cfg.mode;
  rep.summary["t"] = cfg.t;
  rep.summary["p"] = cfg.p;
  rep.summary["series"] = series;
  rep.extra_text["series.json"] = series.dump(2) + "\n";
  rep.csv = csv.str();
  rep.svg = render_svg(plot);
  return rep;
}

// ---------------------------------------------------------------------------

inline Report run_girsanov(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
  std::ostringstream csv;
  csv << detail::kLongHeader;
  ScalingSeries dev;
  dev.name = "mean |E-1|";
  nlohmann::json rows = nlohmann::json::array();
  rep.replication_seeds = detail::replication_seeds(cfg.seed, cfg.R);
  bool martingale_ok = true;
  double worst_z = 0.0;

  for (std::size_t n : cfg.ladder) {
    const RiccatiSolution nplayer = cfg.identical_drifts ? setup.mean_field
                                                         : solve_nplayer_riccati(cfg.model, n, setup.mean_field.grid());
    auto batch = run_replications<GirsanovSample>(cfg.R, cfg.workers, [&](std::size_t r) {
      return girsanov_replicate(setup, nplayer, n, cfg.t, cfg.dt, cfg.seed, r);
    });
    rep.absorb(batch, "N=" + std::to_string(n));
    std::vector<double> devs, dens;
    for (std::size_t r = 0; r < cfg.R; ++r)
      if (batch.results[r]) {
        detail::long_row(csv, "abs_density_minus_one", n, r, cfg.t, batch.results[r]->abs_dev);
        detail::long_row(csv, "density", n, r, cfg.t, batch.results[r]->density);
        devs.push_back(batch.results[r]->abs_dev);
        dens.push_back(batch.results[r]->density);
      }
    if (devs.empty()) continue;
    const SampleSummary sd = summarize(devs), se = summarize(dens);
    dev.add(static_cast<double>(n), sd.mean, sd.stderr_mean, batch.attempted(), batch.failed());
    const double z = se.stderr_mean > 0 ? (se.mean - 1.0) / se.stderr_mean : (se.mean == 1.0 ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, std::abs(z));
    if (!(std::abs(z) <= 3.0)) martingale_ok = false;
    rows.push_back({{"N", n},
                    {"mean_abs_dev", sd.mean},
                    {"mean_abs_dev_stderr", sd.stderr_mean},
                    {"mean_density", se.mean},
                    {"mean_density_stderr", se.stderr_mean},
                    {"z_density", z},
                    {"overflow_failures", batch.failed()}});
  }
  bool monotone = dev.x.size() == cfg.ladder.size();
  double worst_rise = -INFINITY;
  for (std::size_t k = 1; k < dev.y.size(); ++k) {
    const double se = std::hypot(dev.y_stderr[k], dev.y_stderr[k - 1]);
    const double rise = dev.y[k] - dev.y[k - 1];
    worst_rise = std::max(worst_rise, se > 0 ? rise / se : (rise > 0 ? INFINITY : 0.0));
    if (rise > se) monotone = false;
  }
  bool positive = !dev.y.empty();
  for (double y : dev.y) positive = positive && y > 0;
  if (positive && dev.x.size() >= 2) dev.refit();
  rep.add_check("mean_abs_dev_decreasing", monotone, worst_rise, "each rise <= one combined standard error");
  rep.add_check("density_mean_within_3se", martingale_ok, worst_z, "|mean E - 1| <= 3 SE at every N");

  rep.summary["t"] = cfg.t;
  rep.summary["identical_drifts"] = cfg.identical_drifts;
  rep.summary["per_N"] = rows;
  rep.summary["series"] = detail::series_json(dev);
  rep.csv = csv.str();
  Plot plot;
  plot.title = "Girsanov density deviation";
  plot.xlabel = "N";
  plot.ylabel = "mean |E_t - 1|";
  plot.logx = true;
  plot.logy = positive;
  PlotSeries pts;
  pts.name = dev.name;
  pts.x = dev.x;
  pts.y = dev.y;
  pts.line = true;
  plot.series.push_back(pts);
  rep.svg = render_svg(plot);
  return rep;
}

// ---------------------------------------------------------------------------

inline Report run_pointprocess(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
  const RiccatiSolution nplayer = solve_nplayer_riccati(cfg.model, cfg.N, setup.mean_field.grid());
  const ParametricLaw law = setup.flow.law_at(cfg.t);
  const std::size_t ns[] = {cfg.N};
  const Normalizers nz = normalizers_from_quantiles(gaussian_quantile_fn(law.mean, law.stddev()), cfg.gamma, ns,
                                                    cfg.t, "gaussian law of the representative player");
  const std::vector<Rect> rects = cfg.rects();
  const ParametricLaw mu0 = cfg.model.initial_law();

  auto batch = run_replications<std::vector<std::size_t>>(cfg.R, cfg.workers, [&](std::size_t r) {
    const SimConfig sc = detail::sim_config(cfg, cfg.N, r, {System::kNash}, true);
    const BrownianPanel panel = sample_brownian_panel(sc, mu0, detail::noise_tag_for(cfg, System::kNash));
    const ParticleEnsemble en = simulate_nash(sc, setup.model, nplayer, panel);
    return point_process_counts(en.terminal(), nz, cfg.N, rects);
  });
  rep.absorb(batch);
  rep.replication_seeds = detail::replication_seeds(cfg.seed, cfg.R);

  std::ostringstream csv;
  csv << detail::kLongHeader;
  std::vector<double> pooled(rects.size(), 0.0);
  std::vector<std::vector<double>> per_rect(rects.size());
  std::vector<double> union_counts;
  for (std::size_t r = 0; r < cfg.R; ++r) {
    if (!batch.results[r]) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < rects.size(); ++j) {
      const auto c = static_cast<double>((*batch.results[r])[j]);
      detail::long_row(csv, "count_rect_" + std::to_string(j + 1), cfg.N, r, cfg.t, c);
      pooled[j] += c;
      per_rect[j].push_back(c);
      total += c;
    }
    union_counts.push_back(total);
  }
  rep.csv = csv.str();
  const auto ok = static_cast<double>(union_counts.size());

  std::vector<double> expected(rects.size());
  nlohmann::json rect_json = nlohmann::json::array();
  for (std::size_t j = 0; j < rects.size(); ++j) {
    const double nu = poisson_intensity(cfg.gamma, rects[j]);
    expected[j] = ok * nu;
    const SampleSummary s = summarize(per_rect[j]);
    rect_json.push_back({{"a", rects[j].a},
                         {"b", rects[j].b},
                         {"c", rects[j].c},
                         {"d", rects[j].d},
                         {"intensity", nu},
                         {"pooled_count", pooled[j]},
                         {"expected_count", expected[j]},
                         {"mean_count", s.mean},
                         {"mean_count_stderr", s.stderr_mean}});
  }
  nlohmann::json gof_json;
  if (ok > 0) {
    const GofResult gof = poisson_gof(pooled, expected);
    gof_json = {{"statistic", gof.statistic}, {"dof", gof.dof}, {"p_value", gof.p_value}, {"rects", rect_json}};
    rep.add_check("chi_square_pvalue", gof.p_value > cfg.alpha, gof.p_value, "> " + format_double(cfg.alpha));
    const Rect whole(0.0, 1.0, cfg.levels.front(), cfg.levels.back());
    const double nu_union = poisson_intensity(cfg.gamma, whole);
    const SampleSummary su = summarize(union_counts);
    const double z = su.stderr_mean > 0 ? (su.mean - nu_union) / su.stderr_mean : 0.0;
    rep.summary["union"] = {{"intensity", nu_union}, {"mean_count", su.mean}, {"mean_count_stderr", su.stderr_mean}, {"z", z}};
    rep.add_check("union_mean_count_within_3se", std::abs(z) <= 3.0, z, "|z| <= 3");
  }
  rep.summary["N"] = cfg.N;
  rep.summary["t"] = cfg.t;
  rep.summary["gamma"] = cfg.gamma;
  rep.summary["a_N"] = nz.a(cfg.N);
  rep.summary["b_N"] = nz.b(cfg.N);
  rep.summary["gof"] = gof_json;
  rep.extra_text["gof.json"] = gof_json.dump(2) + "\n";
  rep.extra_text["normalizers.csv"] = detail::normalizers_csv(nz);

  Plot plot;
  plot.title = "Pooled rectangle counts";
  plot.xlabel = "rectangle";
  plot.ylabel = "count";
  PlotSeries obs, exp;
  obs.name = "observed";
  exp.name = "expected";
  exp.color = palette(1);
  for (std::size_t j = 0; j < rects.size(); ++j) {
    obs.x.push_back(static_cast<double>(j + 1));
    obs.y.push_back(pooled[j]);
    exp.x.push_back(static_cast<double>(j + 1));
    exp.y.push_back(expected[j]);
  }
  plot.series = {obs, exp};
  rep.svg = render_svg(plot);
  return rep;
}

// ---------------------------------------------------------------------------

inline Report run_lamperti_check(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  const VolatilityProfile profile = cfg.sigma_amplitude == 0.0
                                        ? VolatilityProfile::constant(cfg.sigma_level)
                                        : VolatilityProfile::sinusoidal(cfg.sigma_level, cfg.sigma_amplitude);
  const ScalingMap s = build_scaling(profile, cfg.interval_lo, cfg.interval_hi);

  StrongGapSpec spec;
  spec.drift = [](double x) { return -x; };
  spec.x0 = cfg.lamperti_x0;
  spec.T = cfg.lamperti_T;
  spec.dts = cfg.lamperti_dts;
  std::sort(spec.dts.begin(), spec.dts.end(), std::greater<>());
  spec.paths = cfg.lamperti_paths;
  spec.seed = cfg.seed;
  spec.workers = cfg.workers;
  const StrongGapResult gaps = lamperti_strong_gap(s, spec);
  rep.attempted += gaps.attempted;
  rep.failures = gaps.failures;
  const double round_trip = round_trip_error(s, 1000, cfg.seed);
  const NormalizerPanelResult panel = normalizer_panel_check(s, cfg.panel_n, cfg.panel_reps, cfg.seed, cfg.workers);

  std::ostringstream csv;
  csv << "dt,gap_euler,gap_milstein\n";
  for (std::size_t k = 0; k < gaps.dts.size(); ++k)
    csv << format_double(gaps.dts[k]) << ',' << format_double(gaps.gap_euler[k]) << ','
        << format_double(gaps.gap_milstein[k]) << '\n';
  rep.csv = csv.str();

  nlohmann::json ratios = nlohmann::json::array();
  if (s.affine()) {
    double worst = 0.0;
    for (std::size_t k = 0; k < gaps.dts.size(); ++k)
      worst = std::max({worst, gaps.gap_euler[k], gaps.gap_milstein[k]});
    rep.add_check("constant_volatility_gaps_zero", worst <= 1e-12, worst, "<= 1e-12");
  } else {
    bool halves = gaps.dts.size() >= 2;
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < gaps.dts.size(); ++k) {
      const double expected = gaps.dts[k] / gaps.dts[k + 1];
      const double ratio = gaps.gap_milstein[k] / gaps.gap_milstein[k + 1];
      ratios.push_back({{"from", gaps.dts[k]}, {"to", gaps.dts[k + 1]}, {"milstein", ratio},
                        {"euler", gaps.gap_euler[k] / gaps.gap_euler[k + 1]}});
      const double rel = std::abs(ratio / expected - 1.0);
      worst = std::max(worst, rel);
      if (!(rel <= 0.25)) halves = false;
    }
    rep.add_check("strong_gap_halves", halves, worst, "relative deviation of gap ratio <= 0.25");
  }
  rep.add_check("round_trip", round_trip <= 1e-8, round_trip, "<= 1e-8");
  rep.add_check("normalizer_panel_ks_gap", panel.gap <= 0.02, panel.gap, "<= 0.02");

  rep.summary["gaps"] = {{"dt", gaps.dts}, {"euler", gaps.gap_euler}, {"milstein", gaps.gap_milstein}};
  rep.summary["gap_ratios"] = ratios;
  rep.summary["round_trip_error"] = round_trip;
  rep.summary["normalizer_panel"] = {{"ks_original", panel.ks_original},
                                     {"ks_mapped", panel.ks_mapped},
                                     {"gap", panel.gap},
                                     {"replications", panel.replications},
                                     {"n", cfg.panel_n}};
  std::ostringstream map_csv;
  write_scaling_csv(map_csv, s);
  rep.extra_text["scaling_map.csv"] = map_csv.str();

  Plot plot;
  plot.title = "Strong consistency gap";
  plot.xlabel = "dt";
  plot.ylabel = "mean |S(X_T) - Y_T|";
  plot.logx = true;
  plot.logy = !s.affine();
  PlotSeries e, m;
  e.name = "euler";
  e.x = m.x = gaps.dts;
  e.y = gaps.gap_euler;
  e.line = true;
  m.name = "milstein";
  m.y = gaps.gap_milstein;
  m.line = true;
  m.color = palette(1);
  plot.series = {e, m};
  rep.svg = render_svg(plot);
  return rep;
}

// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

}  // namespace detail

/// Little-endian dump: u64 N, u64 steps, f64 dt, u64 seed, then N rows of
/// steps+1 float64 states (row i = particle i). With a record stride > 1,
/// steps counts recorded intervals and dt is the recorded spacing.
inline std::vector<unsigned char> binary_dump(const ParticleEnsemble& ens, std::uint64_t seed) {
  std::vector<unsigned char> out;
  const std::size_t cols = ens.recorded();
  out.reserve(32 + 8 * ens.N() * cols);
  detail::put_u64(out, ens.N());
  detail::put_u64(out, cols - 1);
  detail::put_u64(out, std::bit_cast<std::uint64_t>(ens.grid().dt() * static_cast<double>(ens.stride())));
  detail::put_u64(out, seed);
  for (std::size_t i = 0; i < ens.N(); ++i)
    for (std::size_t c = 0; c < cols; ++c)
      detail::put_u64(out, std::bit_cast<std::uint64_t>(ens.at_step(c * ens.stride())[i]));
  return out;
}

inline Report run_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  Report rep;
  const LQSetup setup = LQSetup::build(cfg.model, cfg.dt);
  const bool wants_nash = std::find(cfg.systems.begin(), cfg.systems.end(), System::kNash) != cfg.systems.end();
  std::optional<RiccatiSolution> nplayer;
  if (wants_nash) nplayer = solve_nplayer_riccati(cfg.model, cfg.N, setup.mean_field.grid());
  const SimConfig sc = detail::sim_config(cfg, cfg.N, 0, cfg.systems, false);
  sc.validate();
  const ParametricLaw mu0 = cfg.model.initial_law();

  std::ostringstream csv;
  csv << "system,particle,step,t,x\n";
  Plot plot;
  plot.title = "Sample trajectories";
  plot.xlabel = "t";
  plot.ylabel = "x";
  rep.attempted = cfg.systems.size();
  rep.replication_seeds = {derive_seed(cfg.seed, std::uint64_t{0})};
  std::size_t color = 0;
  for (System sys : cfg.systems) {
    const BrownianPanel panel = sample_brownian_panel(sc, mu0, detail::noise_tag_for(cfg, sys));
    try {
      const ParticleEnsemble ens = simulate_system(sys, sc, setup, nplayer ? &*nplayer : nullptr, panel);
      const std::string name(to_string(sys));
      for (std::size_t i = 0; i < ens.N(); ++i)
        for (std::size_t c = 0; c < ens.recorded(); ++c) {
          const std::size_t j = c * ens.stride();
          csv << name << ',' << i << ',' << j << ',' << format_double(ens.grid()[j]) << ','
              << format_double(ens.at_step(j)[i]) << '\n';
        }
      for (std::size_t i = 0; i < std::min<std::size_t>(ens.N(), 5); ++i) {
        PlotSeries s;
        s.name = i == 0 ? name : "";
        s.points = false;
        s.line = true;
        s.color = palette(color);
        for (std::size_t c = 0; c < ens.recorded(); ++c) {
          s.x.push_back(ens.grid()[c * ens.stride()]);
          s.y.push_back(ens.at_step(c * ens.stride())[i]);
        }
        plot.series.push_back(s);
      }
      if (cfg.binary_dump) rep.extra_binary[name + ".bin"] = binary_dump(ens, cfg.seed);
    } catch (const NumericalFailure& e) {
      rep.failures.push_back({static_cast<std::size_t>(sys), e.step(), e.what()});
    }
    ++color;
  }
  rep.summary["N"] = cfg.N;
  rep.summary["t"] = cfg.t;
  rep.summary["dt"] = cfg.dt;
  rep.summary["stride"] = cfg.record_stride;
  nlohmann::json names = nlohmann::json::array();
  for (System s : cfg.systems) names.push_back(std::string(to_string(s)));
  rep.summary["systems"] = names;
  rep.extra_text["riccati.csv"] = detail::riccati_csv(setup.mean_field);
  if (nplayer) rep.extra_text["riccati_nplayer.csv"] = detail::riccati_csv(*nplayer);
  rep.csv = csv.str();
  rep.svg = render_svg(plot);
  return rep;
}

inline Report run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case Experiment::kEvtTopk: return run_evt_topk(cfg);
    case Experiment::kScaling: return run_scaling(cfg);
    case Experiment::kGirsanov: return run_girsanov(cfg);
    case Experiment::kPointProcess: return run_pointprocess(cfg);
    case Experiment::kLampertiCheck: return run_lamperti_check(cfg);
    case Experiment::kSimulate: return run_simulate(cfg);
  }
  throw ConfigError("unknown experiment");
}

}  // namespace nashevt::runner
