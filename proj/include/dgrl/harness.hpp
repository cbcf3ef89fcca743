#pragma once

// Experiment runners. Every run directory holds manifest.json, written
// before any data file and updated as each output is declared.

#include "dgrl/config.hpp"
#include "dgrl/csv.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dgrl::harness {

std::string code_version();

class Manifest {
 public:
  Manifest(std::filesystem::path dir, const ExperimentConfig& config, std::string verb);

  // Records an output (relative to the run directory) and persists the
  // manifest; returns the absolute path to write.
  std::filesystem::path declare(const std::string& relative, const std::string& seed_label);
  void record_timing(const std::string& label, double seconds);
  void record_summary(const std::string& key, const std::string& value);
  void finish(bool ok, const std::string& error = {});

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void save() const;

  std::filesystem::path dir_;
  std::string hash_;
  std::string kind_;
  std::string name_;
  std::string verb_;
  std::string status_ = "running";
  std::string error_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  std::vector<std::pair<std::string, double>> timings_;
  std::vector<std::pair<std::string, std::string>> summary_;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::string verb = "run";
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> outputs;
};

// Runs config.kind for every seed. On a fault the manifest is marked failed
// with partial outputs and the exception propagates.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// One sub-run per sweep value under <out>/<axis>_<value>, then aggregate.csv
// with mean and sample sd over seeds (sd "NA" for a single seed).
RunResult run_sweep(const ExperimentConfig& config, const RunOptions& options = {});

// Columns identifying a row group in the per-seed summary.csv of a kind.
std::vector<std::string> summary_key_columns(ExperimentKind kind);

// Aggregate rows (axis,value,group,metric,mean,sd,count) from per-seed
// summary tables tagged with their sweep value.
io::CsvTable aggregate_summaries(const std::string& axis,
                                 const std::vector<std::pair<std::string, io::CsvTable>>& tables,
                                 const std::vector<std::string>& key_columns);

// Renders plot.inputs into <out>/plot.svg.
RunResult run_plot(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace dgrl::harness
