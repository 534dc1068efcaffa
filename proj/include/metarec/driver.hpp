#pragma once

// Command implementations shared by the CLI, the python module and tests.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metarec/config.hpp"
#include "metarec/data.hpp"
#include "metarec/eval.hpp"
#include "metarec/params.hpp"

namespace metarec {

struct PreparedData {
  std::vector<DomainDataset> sources;
  DomainDataset target;

  std::vector<DomainShape> shapes() const;
};

// Synthetic logs are re-parsed from the same TSV text as files on disk.
PreparedData prepare_data(const RunConfig& cfg);
PreparedData datasets_from_logs(std::vector<DomainLog> logs, const RunConfig& cfg);

// Writes one TSV per domain and manifest.tsv; returns the manifest path.
std::filesystem::path cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct TrainSummary {
  ParameterSet best;
  ParameterSet final_params;
  std::size_t best_iteration = 0;
  EvalResult best_validation;
  EvalResult test;
  std::size_t metric_rows = 0;
};

// Trains the configured variant and writes metrics.csv, weights.csv,
// best.ckpt, final.ckpt, test_metrics.csv and config.txt into out_dir.
TrainSummary run_training(const RunConfig& cfg, const PreparedData& data, const std::filesystem::path& out_dir,
                          std::ostream* log = nullptr);
TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct EvalRequest {
  std::filesystem::path checkpoint;
  // Overrides the config embedded in the checkpoint.
  std::optional<RunConfig> config;
  Split split = Split::kTest;
  std::optional<std::size_t> k;
  // When set, metrics and per-user ranks are written here.
  std::optional<std::filesystem::path> out_dir;
};

EvalResult cmd_eval(const EvalRequest& req);

struct AblationRow {
  Variant variant;
  EvalResult test;
};

// All five variants on the same data and seed; writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                    std::ostream* log = nullptr);

// Throws std::invalid_argument describing the first mismatching entry.
void check_layout(const ParameterSet& loaded, const ParameterSet& expected);

}  // namespace metarec
