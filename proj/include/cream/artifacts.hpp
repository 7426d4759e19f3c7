#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cream/format.hpp"
#include "cream/synthetic.hpp"
#include "cream/trainer.hpp"

namespace cream {

// Declarative recipe for the synthetic environment of a run.
struct TaskGenSpec {
  int num_prompts = 16;
  int responses_per_prompt = 6;
  std::uint64_t seed = 0;
  TaskGenOptions options;

  SyntheticTask build() const;
  nlohmann::json to_json() const;
  static TaskGenSpec from_json(const nlohmann::json& j);
};

// Complete description of one run; serializing and re-running this config
// reproduces every emitted number bit-for-bit.
struct ExperimentConfig {
  TaskGenSpec task;
  TrainConfig train;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// metrics.csv body: iteration,method,proxy_accuracy,mean_loss,consistency_rate.
// Cells that do not apply to a stage (e.g. consistency before the first
// preference iteration) are left empty.
std::string metrics_csv(const ExperimentConfig& config,
                        std::span<const IterationSnapshot> snapshots);

// consistency.csv body: per preference iteration, the dataset consistency
// rate plus mean/std of each ranking statistic.
std::string consistency_summary_csv(std::span<const IterationSnapshot> snapshots);

struct RunResult {
  std::filesystem::path dir;
  std::vector<IterationSnapshot> snapshots;
};

// Execute the run and write the full artifact:
//   config.json, metrics.csv, consistency.csv, pairs.jsonl,
//   snapshots/<label>.json and consistency_<label>.csv per iteration.
RunResult run_and_write(const ExperimentConfig& config, const std::filesystem::path& dir);

struct NamedRun {
  std::string name;
  ExperimentConfig config;
  std::vector<IterationSnapshot> snapshots;
};

// Wide comparison table: one row per (iteration, metric); per run a value
// column, an arrow column (trend vs the run's previous iteration) and a
// delta column against the first run's value for the same cell.
std::string comparison_csv(std::span<const NamedRun> runs);

}  // namespace cream
