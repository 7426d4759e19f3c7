#include "cream/artifacts.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cream {

namespace {

void check_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                      const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.contains(key))
      throw ValidationError("config: unknown key '" + key + "' in " + where);
  }
}

std::string distribution_name(UtilityDistribution d) {
  return d == UtilityDistribution::gap_controlled ? "gap-controlled" : "uniform";
}

UtilityDistribution distribution_from_name(const std::string& name) {
  if (name == "gap-controlled") return UtilityDistribution::gap_controlled;
  if (name == "uniform") return UtilityDistribution::uniform;
  throw ValidationError("config: unknown utility distribution '" + name + "'");
}

}  // namespace

SyntheticTask TaskGenSpec::build() const {
  return generate_task(num_prompts, responses_per_prompt, seed, options);
}

nlohmann::json TaskGenSpec::to_json() const {
  return {{"num_prompts", num_prompts},
          {"responses_per_prompt", responses_per_prompt},
          {"seed", seed},
          {"distribution", distribution_name(options.distribution)},
          {"margin", options.margin},
          {"ambiguous_fraction", options.ambiguous_fraction},
          {"ambiguous_margin", options.ambiguous_margin},
          {"sft_fraction", options.sft_fraction},
          {"noise_level", options.noise_level}};
}

TaskGenSpec TaskGenSpec::from_json(const nlohmann::json& j) {
  check_known_keys(j,
                   {"num_prompts", "responses_per_prompt", "seed", "distribution", "margin",
                    "ambiguous_fraction", "ambiguous_margin", "sft_fraction", "noise_level"},
                   "task");
  TaskGenSpec spec;
  spec.num_prompts = j.value("num_prompts", spec.num_prompts);
  spec.responses_per_prompt = j.value("responses_per_prompt", spec.responses_per_prompt);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("distribution"))
    spec.options.distribution = distribution_from_name(j.at("distribution").get<std::string>());
  spec.options.margin = j.value("margin", spec.options.margin);
  spec.options.ambiguous_fraction =
      j.value("ambiguous_fraction", spec.options.ambiguous_fraction);
  spec.options.ambiguous_margin = j.value("ambiguous_margin", spec.options.ambiguous_margin);
  spec.options.sft_fraction = j.value("sft_fraction", spec.options.sft_fraction);
  spec.options.noise_level = j.value("noise_level", spec.options.noise_level);
  return spec;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"task", task.to_json()}, {"train", train.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_known_keys(j, {"task", "train"}, "top level");
  if (!j.contains("train"))
    throw ValidationError("config: missing required field 'train' (with 'method')");
  ExperimentConfig config;
  if (j.contains("task")) config.task = TaskGenSpec::from_json(j.at("task"));
  config.train = TrainConfig::from_json(j.at("train"));
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config: invalid JSON in '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

std::string metrics_csv(const ExperimentConfig& config,
                        std::span<const IterationSnapshot> snapshots) {
  std::ostringstream os;
  os << "iteration,method,proxy_accuracy,mean_loss,consistency_rate\n";
  const std::string method = method_name(config.train.method);
  for (const IterationSnapshot& snap : snapshots) {
    os << snap.label << ',' << method << ',' << format_double(snap.proxy_accuracy) << ',';
    if (!snap.loss_trace.empty()) os << format_double(snap.mean_loss());
    os << ',';
    if (snap.consistency) os << format_double(snap.consistency->rate);
    os << '\n';
  }
  return os.str();
}

std::string consistency_summary_csv(std::span<const IterationSnapshot> snapshots) {
  std::ostringstream os;
  os << "iteration,consistency_rate,tau_mean,tau_std,spearman_mean,spearman_std,"
        "toporder_mean,toporder_std\n";
  for (const IterationSnapshot& snap : snapshots) {
    if (!snap.consistency) continue;
    const ConsistencyReport& r = *snap.consistency;
    os << snap.label << ',' << format_double(r.rate) << ',' << format_double(r.tau.mean) << ','
       << format_double(r.tau.stddev) << ',' << format_double(r.spearman.mean) << ','
       << format_double(r.spearman.stddev) << ',' << format_double(r.toporder.mean) << ','
       << format_double(r.toporder.stddev) << '\n';
  }
  return os.str();
}

RunResult run_and_write(const ExperimentConfig& config, const std::filesystem::path& dir) {
  const SyntheticTask task = config.task.build();
  RunResult result;
  result.snapshots = run_experiment(task, config.train);
  result.dir = dir;

  std::filesystem::create_directories(dir / "snapshots");

  {
    std::ofstream out(dir / "config.json");
    out << config.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "metrics.csv");
    out << metrics_csv(config, result.snapshots);
  }
  {
    std::ofstream out(dir / "consistency.csv");
    out << consistency_summary_csv(result.snapshots);
  }
  {
    std::ofstream out(dir / "pairs.jsonl");
    for (const IterationSnapshot& snap : result.snapshots)
      write_records_jsonl(out, snap.records);
  }
  for (const IterationSnapshot& snap : result.snapshots) {
    std::ofstream out(dir / "snapshots" / (snap.label + ".json"));
    out << snap.to_json().dump(2) << '\n';
    if (snap.consistency) {
      std::ofstream csv(dir / ("consistency_" + snap.label + ".csv"));
      snap.consistency->write_csv(csv);
    }
  }
  return result;
}

std::string comparison_csv(std::span<const NamedRun> runs) {
  if (runs.empty()) throw ValidationError("comparison: need at least one run");

  // Iteration labels in first-seen order across runs.
  std::vector<std::string> labels;
  for (const NamedRun& run : runs)
    for (const IterationSnapshot& snap : run.snapshots)
      if (std::find(labels.begin(), labels.end(), snap.label) == labels.end())
        labels.push_back(snap.label);

  struct Cell {
    bool present = false;
    double value = 0.0;
  };
  const std::vector<std::string> metrics{"proxy_accuracy", "mean_loss", "consistency_rate"};
  // cells[run][label][metric]
  std::vector<std::map<std::string, std::map<std::string, Cell>>> cells(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const IterationSnapshot& snap : runs[r].snapshots) {
      auto& row = cells[r][snap.label];
      row["proxy_accuracy"] = {true, snap.proxy_accuracy};
      if (!snap.loss_trace.empty()) row["mean_loss"] = {true, snap.mean_loss()};
      if (snap.consistency) row["consistency_rate"] = {true, snap.consistency->rate};
    }
  }

  std::ostringstream os;
  os << "iteration,metric";
  for (const NamedRun& run : runs)
    os << ',' << run.name << ',' << run.name << "_trend," << run.name << "_delta_vs_first";
  os << '\n';

  for (const std::string& label : labels) {
    for (const std::string& metric : metrics) {
      os << label << ',' << metric;
      const Cell first = cells[0][label][metric];
      for (std::size_t r = 0; r < runs.size(); ++r) {
        const Cell cell = cells[r][label][metric];
        os << ',';
        if (cell.present) os << format_double(cell.value);
        os << ',';
        if (cell.present) {
          // Trend against this run's previous iteration label.
          const auto it = std::find(labels.begin(), labels.end(), label);
          Cell prev;
          if (it != labels.begin()) prev = cells[r][*(it - 1)][metric];
          if (prev.present)
            os << (cell.value > prev.value ? "up" : (cell.value < prev.value ? "down" : "flat"));
        }
        os << ',';
        if (cell.present && first.present) os << format_double(cell.value - first.value);
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace cream
