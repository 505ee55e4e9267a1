#pragma once

// Experiment results and their on-disk layout:
//   <outdir>/<experiment>/<config-hash>/{summary.json, data.csv, plot.svg, manifest.json}
// plus optional extra files. Timestamps live only in manifest.json.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashevt/parallel.hpp"
#include "nashevt/runner/config.hpp"

namespace nashevt::runner {

inline constexpr const char* kCodeVersion = "nashevt 0.1.0";

/// Acceptance threshold outcome evaluated in --check mode.
struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string requirement;
};

struct Report {
  nlohmann::json summary = nlohmann::json::object();
  std::string csv;
  std::string svg;
  std::map<std::string, std::string> extra_text;                 // file name -> contents
  std::map<std::string, std::vector<unsigned char>> extra_binary;  // file name -> bytes
  std::vector<Check> checks;
  std::size_t attempted = 0;  // replications attempted
  std::vector<FailureRecord> failures;
  std::vector<std::uint64_t> replication_seeds;

  double failure_rate() const noexcept {
    return attempted == 0 ? 0.0 : static_cast<double>(failures.size()) / static_cast<double>(attempted);
  }
  bool all_checks_pass() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  void add_check(std::string name, bool passed, double value, std::string requirement) {
    checks.push_back({std::move(name), passed, value, std::move(requirement)});
  }

  template <class T>
  void absorb(const ReplicationBatch<T>& batch, const std::string& label = "") {
    attempted += batch.attempted();
    for (auto f : batch.failures) {
      if (!label.empty()) f.message = label + ": " + f.message;
      failures.push_back(std::move(f));
    }
  }
};

/// Failure rate at or above which acceptance thresholds are not applied.
inline constexpr double kAcceptanceFailureRate = 0.05;

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json checks_json(const Report& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : r.checks)
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"requirement", c.requirement}});
  return arr;
}

inline nlohmann::json failures_json(const Report& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : r.failures) arr.push_back({{"index", f.index}, {"step", f.step}, {"message", f.message}});
  return arr;
}

/// Adds provenance and failure accounting to the summary.
inline void finalize_summary(const ExperimentConfig& cfg, Report& r) {
  r.summary["experiment"] = std::string(to_string(cfg.kind));
  r.summary["provenance"] = {{"config_hash", config_hash(cfg)}, {"master_seed", cfg.seed}, {"code_version", kCodeVersion}};
  r.summary["replications"] = {{"attempted", r.attempted}, {"failed", r.failures.size()}, {"failure_rate", r.failure_rate()}};
  r.summary["checks"] = checks_json(r);
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

/// Writes every artifact and returns the result directory.
inline std::filesystem::path write_outputs(const ExperimentConfig& cfg, Report& r, const std::string& started) {
  finalize_summary(cfg, r);
  const std::string hash = config_hash(cfg);
  const std::filesystem::path dir = std::filesystem::path(cfg.outdir) / std::string(to_string(cfg.kind)) / hash;
  std::filesystem::create_directories(dir);
  write_file(dir / "summary.json", r.summary.dump(2) + "\n");
  write_file(dir / "data.csv", r.csv);
  write_file(dir / "plot.svg", r.svg);
  for (const auto& [name, text] : r.extra_text) write_file(dir / name, text);
  for (const auto& [name, bytes] : r.extra_binary) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  nlohmann::json seeds = nlohmann::json::array();
  for (auto s : r.replication_seeds) seeds.push_back(hex64(s));
  nlohmann::json manifest;
  manifest["config_hash"] = hash;
  manifest["config"] = to_json(cfg);
  manifest["master_seed"] = cfg.seed;
  manifest["code_version"] = kCodeVersion;
  manifest["replication_seeds"] = seeds;
  manifest["results_hash"] = hex64(fnv1a(r.csv));
  manifest["summary_hash"] = hex64(fnv1a(r.summary.dump()));
  manifest["started"] = started;
  manifest["finished"] = utc_now();
  manifest["workers"] = cfg.workers;
  manifest["failures"] = failures_json(r);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return dir;
}

}  // namespace nashevt::runner
