#pragma once

// Experiment configuration: built-in defaults, overridden by a TOML file,
// overridden by command-line flags. The config hash covers every field that
// can change results (worker count and output directory are excluded).

#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "nashevt/errors.hpp"
#include "nashevt/evt.hpp"
#include "nashevt/model.hpp"
#include "nashevt/particle_sim.hpp"

namespace nashevt::runner {

enum class Experiment { kEvtTopk, kScaling, kGirsanov, kPointProcess, kLampertiCheck, kSimulate };

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::kEvtTopk: return "evt-topk";
    case Experiment::kScaling: return "scaling";
    case Experiment::kGirsanov: return "girsanov";
    case Experiment::kPointProcess: return "pointprocess";
    case Experiment::kLampertiCheck: return "lamperti-check";
    case Experiment::kSimulate: return "simulate";
  }
  return "unknown";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
  for (Experiment e : {Experiment::kEvtTopk, Experiment::kScaling, Experiment::kGirsanov, Experiment::kPointProcess,
                       Experiment::kLampertiCheck, Experiment::kSimulate})
    if (to_string(e) == s) return e;
  return std::nullopt;
}

/// Upper level standing in for +infinity in rectangle lists.
inline constexpr double kInfinityProxy = 1e6;

struct ExperimentConfig {
  Experiment kind = Experiment::kSimulate;
  LQParams model;

  // shared simulation settings
  std::uint64_t seed = 20240601;
  std::size_t workers = 1;
  std::string outdir = "out";
  double dt = 0.01;
  double t = 0.5;
  std::size_t N = 100;
  std::size_t R = 100;
  std::vector<System> systems{System::kNash, System::kIid};
  bool shared_noise = true;

  // evt-topk / pointprocess
  std::size_t k = 3;
  double gamma = 0.0;
  std::vector<double> levels{0.0, 0.5, 1.0, 2.0, kInfinityProxy};
  double alpha = 0.01;

  // scaling / girsanov
  std::string mode = "wasserstein";  // wasserstein | driftgap | synthetic
  std::vector<std::size_t> ladder{100, 200, 400, 800, 1600};
  double p = 1.0;
  bool identical_drifts = false;

  // lamperti-check
  double sigma_level = 2.0;
  double sigma_amplitude = 1.0;
  double interval_lo = -10.0;
  double interval_hi = 10.0;
  double lamperti_x0 = 0.5;
  double lamperti_T = 1.0;
  std::vector<double> lamperti_dts{0.02, 0.01, 0.005};
  std::size_t lamperti_paths = 2000;
  std::size_t panel_n = 1000;
  std::size_t panel_reps = 10000;

  // simulate
  std::size_t record_stride = 1;
  bool binary_dump = false;

  // --check thresholds (negative = use the built-in default)
  double check_ks = -1.0;
  double check_ks_limit = -1.0;
  double check_slope_tol = -1.0;

  std::vector<Rect> rects() const {
    std::vector<Rect> out;
    for (std::size_t j = 0; j + 1 < levels.size(); ++j) out.emplace_back(0.0, 1.0, levels[j], levels[j + 1]);
    return out;
  }

  void validate() const {
    try {
      model.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(dt > 0.0 && std::isfinite(dt), "dt must be > 0");
    need(t > 0.0 && t <= model.T * (1 + 1e-12), "t must lie in (0, T]");
    need(R >= 1, "R must be >= 1");
    need(N >= 1, "N must be >= 1");
    need(workers >= 1, "workers must be >= 1");
    need(!systems.empty(), "systems must not be empty");
    need(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
    need(std::isfinite(gamma), "gamma must be finite");
    const auto steps_of = [](double horizon, double h) {
      const double r = horizon / h;
      return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
    };
    need(steps_of(model.T, dt), "T/dt must be an integer");
    need(steps_of(t, dt), "t/dt must be an integer");
    switch (kind) {
      case Experiment::kEvtTopk:
        need(k >= 1 && k <= N, "k must satisfy 1 <= k <= N");
        need(N >= 2, "evt-topk needs N >= 2");
        break;
      case Experiment::kPointProcess:
        need(N >= 2, "pointprocess needs N >= 2");
        need(levels.size() >= 2, "pointprocess needs at least two levels");
        for (std::size_t j = 0; j + 1 < levels.size(); ++j) need(levels[j] < levels[j + 1], "levels must increase");
        break;
      case Experiment::kScaling:
      case Experiment::kGirsanov:
        need(ladder.size() >= 2, "ladder needs at least two N values");
        for (std::size_t j = 0; j < ladder.size(); ++j) {
          need(ladder[j] >= 1, "ladder values must be >= 1");
          if (j > 0) need(ladder[j] > ladder[j - 1], "ladder must be strictly increasing");
        }
        need(mode == "wasserstein" || mode == "driftgap" || mode == "synthetic",
             "mode must be wasserstein, driftgap or synthetic");
        need(p > 0.0, "p must be > 0");
        if (kind == Experiment::kScaling && mode == "driftgap")
          for (std::size_t n : ladder) need(n >= 2, "driftgap ladder values must be >= 2");
        break;
      case Experiment::kLampertiCheck:
        need(sigma_level - std::abs(sigma_amplitude) > 0.0, "volatility must stay positive");
        need(interval_lo <= 0.0 && interval_hi >= 0.0 && interval_lo < interval_hi, "interval must contain 0");
        need(lamperti_x0 > interval_lo && lamperti_x0 < interval_hi, "x0 must lie inside the interval");
        need(!lamperti_dts.empty(), "dts must not be empty");
        need(lamperti_paths >= 1 && panel_reps >= 1 && panel_n >= 2, "lamperti sample sizes too small");
        break;
      case Experiment::kSimulate:
        need(record_stride >= 1, "stride must be >= 1");
        break;
    }
  }
};

namespace detail {

template <class T>
void read(const toml::table& tbl, std::string_view key, T& out) {
  const auto node = tbl[key];
  if (!node) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node.value<bool>()) {
      out = *v;
      return;
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node.value<std::string>()) {
      out = *v;
      return;
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node.value<double>()) {
      out = *v;
      return;
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node.value<std::int64_t>()) {
      if (*v < 0) throw ConfigError("negative value for '" + std::string(key) + "'");
      out = static_cast<T>(*v);
      return;
    }
  }
  throw ConfigError("wrong type for '" + std::string(key) + "'");
}

template <class T>
void read_array(const toml::table& tbl, std::string_view key, std::vector<T>& out) {
  const auto node = tbl[key];
  if (!node) return;
  const auto* arr = node.as_array();
  if (arr == nullptr) throw ConfigError("'" + std::string(key) + "' must be an array");
  std::vector<T> v;
  for (const auto& el : *arr) {
    if constexpr (std::is_floating_point_v<T>) {
      auto x = el.template value<double>();
      if (!x) throw ConfigError("'" + std::string(key) + "' must hold numbers");
      v.push_back(*x);
    } else if constexpr (std::is_integral_v<T>) {
      auto x = el.template value<std::int64_t>();
      if (!x || *x < 0) throw ConfigError("'" + std::string(key) + "' must hold non-negative integers");
      v.push_back(static_cast<T>(*x));
    } else {
      auto x = el.template value<std::string>();
      if (!x) throw ConfigError("'" + std::string(key) + "' must hold strings");
      v.push_back(*x);
    }
  }
  out = std::move(v);
}

inline const toml::table* section(const toml::table& root, std::string_view name) {
  const auto node = root[name];
  if (!node) return nullptr;
  const auto* t = node.as_table();
  if (t == nullptr) throw ConfigError("[" + std::string(name) + "] must be a table");
  return t;
}

}  // namespace detail

/// Applies a parsed TOML document on top of `cfg`.
inline void apply_toml(ExperimentConfig& cfg, const toml::table& root) {
  using detail::read;
  using detail::read_array;
  std::string kind;
  read(root, "experiment", kind);
  if (!kind.empty()) {
    auto e = parse_experiment(kind);
    if (!e) throw ConfigError("unknown experiment '" + kind + "'");
    cfg.kind = *e;
  }
  if (const auto* m = detail::section(root, "model")) {
    read(*m, "a", cfg.model.a);
    read(*m, "q", cfg.model.q);
    read(*m, "eps", cfg.model.eps);
    read(*m, "c", cfg.model.c);
    read(*m, "sigma", cfg.model.sigma);
    read(*m, "T", cfg.model.T);
    read(*m, "mu0_mean", cfg.model.mu0_mean);
    read(*m, "mu0_std", cfg.model.mu0_std);
  }
  if (const auto* r = detail::section(root, "run")) {
    read(*r, "seed", cfg.seed);
    read(*r, "workers", cfg.workers);
    read(*r, "outdir", cfg.outdir);
    read(*r, "dt", cfg.dt);
    read(*r, "t", cfg.t);
    read(*r, "N", cfg.N);
    read(*r, "R", cfg.R);
    read(*r, "shared_noise", cfg.shared_noise);
    std::vector<std::string> names;
    read_array(*r, "systems", names);
    if (!names.empty()) {
      cfg.systems.clear();
      for (const auto& n : names) {
        auto s = parse_system(n);
        if (!s) throw ConfigError("unknown system '" + n + "'");
        cfg.systems.push_back(*s);
      }
    }
  }
  if (const auto* e = detail::section(root, "evt")) {
    read(*e, "k", cfg.k);
    read(*e, "gamma", cfg.gamma);
    read(*e, "alpha", cfg.alpha);
    read_array(*e, "levels", cfg.levels);
  }
  if (const auto* s = detail::section(root, "scaling")) {
    read(*s, "mode", cfg.mode);
    read_array(*s, "ladder", cfg.ladder);
    read(*s, "p", cfg.p);
    read(*s, "identical_drifts", cfg.identical_drifts);
  }
  if (const auto* l = detail::section(root, "lamperti")) {
    read(*l, "sigma_level", cfg.sigma_level);
    read(*l, "sigma_amplitude", cfg.sigma_amplitude);
    read(*l, "lo", cfg.interval_lo);
    read(*l, "hi", cfg.interval_hi);
    read(*l, "x0", cfg.lamperti_x0);
    read(*l, "T", cfg.lamperti_T);
    read_array(*l, "dts", cfg.lamperti_dts);
    read(*l, "paths", cfg.lamperti_paths);
    read(*l, "panel_n", cfg.panel_n);
    read(*l, "panel_reps", cfg.panel_reps);
  }
  if (const auto* s = detail::section(root, "simulate")) {
    read(*s, "stride", cfg.record_stride);
    read(*s, "binary", cfg.binary_dump);
  }
  if (const auto* c = detail::section(root, "check")) {
    read(*c, "ks", cfg.check_ks);
    read(*c, "ks_limit", cfg.check_ks_limit);
    read(*c, "slope_tol", cfg.check_slope_tol);
  }
}

inline void apply_toml_file(ExperimentConfig& cfg, const std::string& path) {
  try {
    apply_toml(cfg, toml::parse_file(path));
  } catch (const toml::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + std::string(e.description()));
  }
}

inline void apply_toml_string(ExperimentConfig& cfg, std::string_view text) {
  try {
    apply_toml(cfg, toml::parse(text));
  } catch (const toml::parse_error& e) {
    throw ConfigError("cannot parse config: " + std::string(e.description()));
  }
}

/// Canonical JSON of every result-affecting field (keys sorted).
inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json sys = json::array();
  for (System s : c.systems) sys.push_back(std::string(to_string(s)));
  json j;
  j["experiment"] = std::string(to_string(c.kind));
  j["model"] = {{"a", c.model.a},           {"q", c.model.q},         {"eps", c.model.eps},
                {"c", c.model.c},           {"sigma", c.model.sigma}, {"T", c.model.T},
                {"mu0_mean", c.model.mu0_mean}, {"mu0_std", c.model.mu0_std}};
  j["run"] = {{"seed", c.seed}, {"dt", c.dt}, {"t", c.t}, {"N", c.N}, {"R", c.R}, {"systems", sys},
              {"shared_noise", c.shared_noise}};
  switch (c.kind) {
    case Experiment::kEvtTopk:
      j["evt"] = {{"k", c.k}, {"gamma", c.gamma}};
      break;
    case Experiment::kPointProcess:
      j["evt"] = {{"gamma", c.gamma}, {"levels", c.levels}, {"alpha", c.alpha}};
      break;
    case Experiment::kScaling:
    case Experiment::kGirsanov:
      j["scaling"] = {{"mode", c.mode}, {"ladder", c.ladder}, {"p", c.p}, {"identical_drifts", c.identical_drifts}};
      break;
    case Experiment::kLampertiCheck:
      j["lamperti"] = {{"sigma_level", c.sigma_level}, {"sigma_amplitude", c.sigma_amplitude},
                       {"lo", c.interval_lo},          {"hi", c.interval_hi},
                       {"x0", c.lamperti_x0},          {"T", c.lamperti_T},
                       {"dts", c.lamperti_dts},        {"paths", c.lamperti_paths},
                       {"panel_n", c.panel_n},         {"panel_reps", c.panel_reps}};
      break;
    case Experiment::kSimulate:
      j["simulate"] = {{"stride", c.record_stride}, {"binary", c.binary_dump}};
      break;
  }
  j["check"] = {{"ks", c.check_ks}, {"ks_limit", c.check_ks_limit}, {"slope_tol", c.check_slope_tol}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

}  // namespace nashevt::runner
