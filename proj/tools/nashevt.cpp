// Command-line front end. Precedence: built-in defaults < TOML file < flags.
//
// Exit codes: 0 ok, 1 config error, 2 numerical failure rate at or above 5%
// (or an unrecoverable numerical error), 3 acceptance check failed (--check).

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nashevt/runner/config.hpp"
#include "nashevt/runner/experiments.hpp"
#include "nashevt/runner/report.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> outdir;
  std::optional<std::size_t> N;
  std::optional<std::size_t> R;
  bool check = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "TOML configuration file");
  sub->add_option("--seed", f.seed, "master seed (u64)");
  sub->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--outdir", f.outdir, "output root directory");
  sub->add_option("--N", f.N, "particle count override")->check(CLI::PositiveNumber);
  sub->add_option("--R", f.R, "replication count override")->check(CLI::PositiveNumber);
  sub->add_flag("--check", f.check, "exit 3 when an acceptance threshold is violated");
}

int run(nashevt::runner::Experiment kind, const Flags& f) {
  using namespace nashevt::runner;
  ExperimentConfig cfg;
  cfg.kind = kind;
  try {
    if (!f.config.empty()) apply_toml_file(cfg, f.config);
    if (cfg.kind != kind)
      throw nashevt::ConfigError("config file describes '" + std::string(to_string(cfg.kind)) + "' but subcommand is '" +
                                 std::string(to_string(kind)) + "'");
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) cfg.workers = *f.workers;
    if (f.outdir) cfg.outdir = *f.outdir;
    if (f.N) cfg.N = *f.N;
    if (f.R) cfg.R = *f.R;
    cfg.validate();
  } catch (const nashevt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  const std::string started = utc_now();
  Report report;
  try {
    report = run_experiment(cfg);
  } catch (const nashevt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
  const auto dir = write_outputs(cfg, report, started);
  std::cout << "results: " << dir.string() << '\n';
  std::cout << "replications: " << report.attempted << " attempted, " << report.failures.size() << " failed\n";
  for (const auto& c : report.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " = " << nashevt::io::format_double(c.value) << " ("
              << c.requirement << ")\n";

  if (report.failure_rate() >= kAcceptanceFailureRate) {
    std::cerr << "numerical failure rate " << report.failure_rate() << " reaches the 5% threshold\n";
    return 2;
  }
  if (f.check && !report.all_checks_pass()) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using nashevt::runner::Experiment;
  CLI::App app{"Nash-system extreme value experiments"};
  app.require_subcommand(1);
  Flags flags;
  struct Entry {
    const char* name;
    const char* help;
    Experiment kind;
  };
  const Entry entries[] = {
      {"evt-topk", "top-k order statistics of the Nash and i.i.d. systems", Experiment::kEvtTopk},
      {"scaling", "Wasserstein / drift-gap scaling over an N ladder", Experiment::kScaling},
      {"girsanov", "density between Nash and decentralized laws", Experiment::kGirsanov},
      {"pointprocess", "rectangle counts against the Poisson intensity", Experiment::kPointProcess},
      {"lamperti-check", "unit-volatility transform consistency", Experiment::kLampertiCheck},
      {"simulate", "trajectories of the coupled particle systems", Experiment::kSimulate},
  };
  std::optional<Experiment> chosen;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_common(sub, flags);
    sub->callback([&chosen, kind = e.kind] { chosen = kind; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  return run(*chosen, flags);
}
