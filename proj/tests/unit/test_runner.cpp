#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nashevt/runner/config.hpp"
#include "nashevt/runner/experiments.hpp"
#include "nashevt/runner/report.hpp"
#include "nashevt/runner/svg.hpp"

using namespace nashevt;
using namespace nashevt::runner;

namespace {

ExperimentConfig parsed(std::string_view text) {
  ExperimentConfig cfg;
  apply_toml_string(cfg, text);
  return cfg;
}

const Check& find_check(const Report& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::out_of_range("no check " + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Config, ParsesEverySection) {
  const auto cfg = parsed(R"(
experiment = "pointprocess"
[model]
a = 2.0
sigma = 0.5
[run]
seed = 7
N = 300
R = 40
dt = 0.005
systems = ["nash", "iid"]
[evt]
gamma = 0.0
levels = [0.0, 1.0, 1000000.0]
alpha = 0.05
)");
  EXPECT_EQ(cfg.kind, Experiment::kPointProcess);
  EXPECT_EQ(cfg.model.a, 2.0);
  EXPECT_EQ(cfg.model.sigma, 0.5);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.N, 300u);
  EXPECT_EQ(cfg.R, 40u);
  EXPECT_EQ(cfg.dt, 0.005);
  EXPECT_EQ(cfg.levels.size(), 3u);
  EXPECT_EQ(cfg.rects().size(), 2u);
  EXPECT_EQ(cfg.rects()[1].d, 1e6);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parsed("experiment = \"nope\""), ConfigError);
  EXPECT_THROW(parsed("[run]\nN = -3"), ConfigError);
  EXPECT_THROW(parsed("[run]\nN = \"many\""), ConfigError);
  EXPECT_THROW(parsed("[run]\nsystems = [\"martian\"]"), ConfigError);
  EXPECT_THROW(parsed("run = 3"), ConfigError);
  EXPECT_THROW(parsed("[model\n"), ConfigError);
  EXPECT_THROW(parsed("[model]\nsigma = 0.0").validate(), ConfigError);
  EXPECT_THROW(parsed("[model]\neps = 0.1\nq = 1.0").validate(), ConfigError);
  EXPECT_THROW(parsed("[run]\ndt = 0.03").validate(), ConfigError);
  EXPECT_THROW(parsed("experiment = \"scaling\"\n[scaling]\nladder = [200, 100]").validate(), ConfigError);
  EXPECT_THROW(parsed("experiment = \"evt-topk\"\n[run]\nN = 5\n[evt]\nk = 6").validate(), ConfigError);
  EXPECT_THROW(parsed("experiment = \"lamperti-check\"\n[lamperti]\nsigma_level = 1.0\nsigma_amplitude = 1.0").validate(),
               ConfigError);
  EXPECT_THROW(parsed("experiment = \"lamperti-check\"\n[lamperti]\nlo = 1.0\nhi = 2.0").validate(), ConfigError);
}

TEST(Config, HashIgnoresWorkersAndOutdir) {
  ExperimentConfig a, b;
  b.workers = 8;
  b.outdir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  ExperimentConfig c;
  c.model.sigma = 0.71;
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Svg, RendersSeriesAndEscapesText) {
  Plot p;
  p.title = "a < b & c";
  p.logx = p.logy = true;
  PlotSeries s;
  s.name = "pts";
  s.x = {1, 10, 100};
  s.y = {1, 0.1, 0.01};
  s.line = true;
  p.series.push_back(s);
  const std::string svg = render_svg(p);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_EQ(render_svg(p), svg);
  Plot empty;
  EXPECT_NE(render_svg(empty).find("</svg>"), std::string::npos);
}

TEST(Runner, SyntheticScalingSlope) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kScaling;
  cfg.mode = "synthetic";
  const Report r = run_experiment(cfg);
  const auto& c = find_check(r, "synthetic_slope");
  EXPECT_TRUE(c.passed);
  EXPECT_NEAR(c.value, -0.5, 1e-12);
}

TEST(Runner, IdenticalDriftsGiveUnitDensity) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kGirsanov;
  cfg.identical_drifts = true;
  cfg.ladder = {10, 20};
  cfg.R = 5;
  cfg.dt = 0.05;
  const Report r = run_experiment(cfg);
  for (const auto& row : r.summary["per_N"]) {
    EXPECT_EQ(row["mean_abs_dev"].get<double>(), 0.0);
    EXPECT_EQ(row["mean_density"].get<double>(), 1.0);
  }
}

TEST(Runner, UnitVolatilityLampertiGapsVanish) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kLampertiCheck;
  cfg.sigma_level = 1.0;
  cfg.sigma_amplitude = 0.0;
  cfg.lamperti_paths = 50;
  cfg.panel_reps = 200;
  const Report r = run_experiment(cfg);
  const auto& c = find_check(r, "constant_volatility_gaps_zero");
  EXPECT_TRUE(c.passed);
  EXPECT_EQ(c.value, 0.0);
  EXPECT_EQ(find_check(r, "normalizer_panel_ks_gap").value, 0.0);
}

TEST(Runner, PointProcessUnionCountNearIntensity) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kPointProcess;
  cfg.N = 500;
  cfg.R = 200;
  cfg.dt = 0.01;
  const Report r = run_experiment(cfg);
  EXPECT_LE(std::abs(r.summary["union"]["z"].get<double>()), 3.0);
  EXPECT_NEAR(r.summary["union"]["intensity"].get<double>(), 1.0, 1e-5);
}

TEST(Runner, EvtTopkCsvShape) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kEvtTopk;
  cfg.N = 50;
  cfg.R = 4;
  cfg.k = 2;
  cfg.dt = 0.05;
  const Report r = run_experiment(cfg);
  EXPECT_EQ(r.csv.rfind("rep,source,component,value\n", 0), 0u);
  EXPECT_EQ(std::count(r.csv.begin(), r.csv.end(), '\n'), 1 + 4 * 2 * 3);
  EXPECT_EQ(r.summary["components"].size(), 2u);
}

TEST(Runner, WorkerCountDoesNotChangeResults) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kScaling;
  cfg.ladder = {20, 40};
  cfg.R = 6;
  cfg.dt = 0.05;
  const Report a = run_experiment(cfg);
  cfg.workers = 8;
  const Report b = run_experiment(cfg);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.summary.dump(), b.summary.dump());
}

TEST(Runner, SeedSwapKeepsStatisticStable) {
  ExperimentConfig cfg;
  cfg.kind = Experiment::kGirsanov;
  cfg.ladder = {50, 100};
  cfg.R = 200;
  cfg.dt = 0.02;
  const Report a = run_experiment(cfg);
  cfg.seed = 99;
  const Report b = run_experiment(cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& ra = a.summary["per_N"][k];
    const auto& rb = b.summary["per_N"][k];
    const double se = std::hypot(ra["mean_abs_dev_stderr"].get<double>(), rb["mean_abs_dev_stderr"].get<double>());
    EXPECT_LE(std::abs(ra["mean_abs_dev"].get<double>() - rb["mean_abs_dev"].get<double>()), 2 * se);
  }
  EXPECT_NE(a.csv, b.csv);
}

TEST(Runner, SimulateWritesLayoutDeterministically) {
  const auto root = std::filesystem::temp_directory_path() / "nashevt_runner_test";
  std::filesystem::remove_all(root);
  ExperimentConfig cfg;
  cfg.kind = Experiment::kSimulate;
  cfg.N = 5;
  cfg.dt = 0.1;
  cfg.outdir = root.string();
  cfg.binary_dump = true;
  Report r1 = run_experiment(cfg);
  const auto dir = write_outputs(cfg, r1, utc_now());
  EXPECT_EQ(dir, root / "simulate" / config_hash(cfg));
  for (const char* f : {"summary.json", "data.csv", "plot.svg", "manifest.json", "riccati.csv", "nash.bin"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const std::string first = slurp(dir / "data.csv");
  // header + systems * N * (steps to t = 0.5, plus one)
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 1 + 2 * 5 * 6);
  EXPECT_EQ(std::filesystem::file_size(dir / "nash.bin"), 32u + 8u * 5 * 6);
  cfg.workers = 8;
  Report r2 = run_experiment(cfg);
  write_outputs(cfg, r2, utc_now());
  EXPECT_EQ(slurp(dir / "data.csv"), first);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["results_hash"].get<std::string>(), hex64(fnv1a(first)));
  std::filesystem::remove_all(root);
}

TEST(Runner, DriftlessModelGivesIdenticalTopK) {
  // Zero drift with shared noise: the Nash and i.i.d. systems coincide path by path.
  ExperimentConfig cfg;
  cfg.kind = Experiment::kEvtTopk;
  cfg.model.a = cfg.model.q = cfg.model.eps = cfg.model.c = 0.0;
  cfg.N = 30;
  cfg.R = 1;
  cfg.dt = 0.05;
  const Report r = run_experiment(cfg);
  for (const auto& comp : r.summary["components"]) EXPECT_EQ(comp["ks_nash_vs_iid"].get<double>(), 0.0);
  EXPECT_EQ(find_check(r, "ks_nash_vs_iid_component_1").value, 0.0);
}
