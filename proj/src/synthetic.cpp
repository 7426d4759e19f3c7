#include "cream/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "cream/rng.hpp"

namespace cream {

double SyntheticTask::utility_at(int prompt, int response) const {
  if (prompt < 0 || prompt >= space.num_prompts)
    throw ValidationError("SyntheticTask: prompt index out of range");
  if (response < 0 || response >= space.responses_per_prompt)
    throw ValidationError("SyntheticTask: response index out of range");
  return utility[static_cast<std::size_t>(prompt) * space.responses_per_prompt + response];
}

int SyntheticTask::best_response(int prompt) const {
  int best = 0;
  for (int v = 1; v < space.responses_per_prompt; ++v)
    if (utility_at(prompt, v) > utility_at(prompt, best)) best = v;
  return best;
}

void SyntheticTask::validate() const {
  space.validate();
  if (utility.size() !=
      static_cast<std::size_t>(space.num_prompts) * space.responses_per_prompt)
    throw ValidationError("SyntheticTask: utility size does not match the task space");
  for (double u : utility)
    if (!std::isfinite(u)) throw ValidationError("SyntheticTask: non-finite utility");
  if (sft_split.empty()) throw ValidationError("SyntheticTask: sft_split must be nonempty");
  for (const SftExample& ex : sft_split) {
    if (ex.prompt < 0 || ex.prompt >= space.num_prompts ||
        ex.target < 0 || ex.target >= space.responses_per_prompt)
      throw ValidationError("SyntheticTask: sft_split example out of range");
  }
  if (!(noise_level >= 0.0)) throw ValidationError("SyntheticTask: noise_level must be >= 0");
}

nlohmann::json SyntheticTask::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int p = 0; p < space.num_prompts; ++p) {
    nlohmann::json row = nlohmann::json::array();
    for (int v = 0; v < space.responses_per_prompt; ++v) row.push_back(utility_at(p, v));
    rows.push_back(std::move(row));
  }
  nlohmann::json split = nlohmann::json::array();
  for (const SftExample& ex : sft_split)
    split.push_back({{"prompt", ex.prompt}, {"target", ex.target}});
  return {{"utility", rows},
          {"sft_split", split},
          {"noise_level", noise_level},
          {"seed", seed}};
}

SyntheticTask SyntheticTask::from_json(const nlohmann::json& j) {
  SyntheticTask task;
  const auto& rows = j.at("utility");
  if (!rows.is_array() || rows.empty() || !rows[0].is_array())
    throw ValidationError("SyntheticTask: utility must be a non-empty 2-d array");
  task.space.num_prompts = static_cast<int>(rows.size());
  task.space.responses_per_prompt = static_cast<int>(rows[0].size());
  task.space.validate();
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != task.space.responses_per_prompt)
      throw ValidationError("SyntheticTask: ragged utility rows");
    for (const auto& u : row) task.utility.push_back(u.get<double>());
  }
  for (const auto& ex : j.at("sft_split"))
    task.sft_split.push_back({ex.at("prompt").get<int>(), ex.at("target").get<int>()});
  task.noise_level = j.value("noise_level", 0.0);
  task.seed = j.value("seed", std::uint64_t{0});
  task.validate();
  return task;
}

namespace {

std::vector<int> shuffled_prompts(int num_prompts, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(num_prompts));
  for (int p = 0; p < num_prompts; ++p) ids[static_cast<std::size_t>(p)] = p;
  for (int i = num_prompts - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(k)]);
  }
  return ids;
}

}  // namespace

SyntheticTask generate_task(int num_prompts, int responses_per_prompt, std::uint64_t seed,
                            const TaskGenOptions& options) {
  TaskSpace space{num_prompts, responses_per_prompt};
  space.validate();
  if (!(options.margin >= 0.0) || !(options.ambiguous_margin >= 0.0))
    throw ValidationError("generate_task: margins must be >= 0");
  if (options.ambiguous_fraction < 0.0 || options.ambiguous_fraction > 1.0)
    throw ValidationError("generate_task: ambiguous_fraction must lie in [0, 1]");
  if (options.sft_fraction < 0.0 || options.sft_fraction > 1.0)
    throw ValidationError("generate_task: sft_fraction must lie in [0, 1]");

  SyntheticTask task;
  task.space = space;
  task.seed = seed;
  task.noise_level = options.noise_level;
  task.utility.resize(static_cast<std::size_t>(num_prompts) * responses_per_prompt);

  Rng rng(derive_seed(seed, {0x7a51u}));

  // Which prompts get the near-tied margin (gap-controlled only).
  std::vector<char> ambiguous(static_cast<std::size_t>(num_prompts), 0);
  if (options.distribution == UtilityDistribution::gap_controlled &&
      options.ambiguous_fraction > 0.0) {
    Rng pick(derive_seed(seed, {0xa3b1u}));
    const std::vector<int> order = shuffled_prompts(num_prompts, pick);
    const int k = static_cast<int>(
        std::lround(options.ambiguous_fraction * static_cast<double>(num_prompts)));
    for (int i = 0; i < k && i < num_prompts; ++i)
      ambiguous[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  }

  for (int p = 0; p < num_prompts; ++p) {
    double* row = task.utility.data() + static_cast<std::size_t>(p) * responses_per_prompt;
    for (int v = 0; v < responses_per_prompt; ++v) row[v] = rng.uniform();
    if (options.distribution == UtilityDistribution::gap_controlled) {
      int best = 0;
      for (int v = 1; v < responses_per_prompt; ++v)
        if (row[v] > row[best]) best = v;
      double second = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < responses_per_prompt; ++v)
        if (v != best) second = std::max(second, row[v]);
      const double m = ambiguous[static_cast<std::size_t>(p)] ? options.ambiguous_margin
                                                              : options.margin;
      row[best] = second + m;
    }
  }

  Rng split_rng(derive_seed(seed, {0x5f7u}));
  const std::vector<int> order = shuffled_prompts(num_prompts, split_rng);
  const int want = static_cast<int>(
      std::lround(options.sft_fraction * static_cast<double>(num_prompts)));
  const int count = std::max(1, std::min(want, num_prompts));
  for (int i = 0; i < count; ++i) {
    const int p = order[static_cast<std::size_t>(i)];
    task.sft_split.push_back({p, task.best_response(p)});
  }
  std::sort(task.sft_split.begin(), task.sft_split.end(),
            [](const SftExample& a, const SftExample& b) { return a.prompt < b.prompt; });

  task.validate();
  return task;
}

double proxy_accuracy(const PolicyParams& policy, const SyntheticTask& task) {
  if (policy.space() != task.space)
    throw ValidationError("proxy_accuracy: policy/task shape mismatch");
  int hits = 0;
  for (int p = 0; p < task.space.num_prompts; ++p)
    if (policy.argmax_response(p) == task.best_response(p)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(task.space.num_prompts);
}

std::vector<double> perturb_rewards(std::span<const double> rewards, double noise_level,
                                    std::uint64_t seed) {
  if (!(noise_level >= 0.0)) throw ValidationError("perturb_rewards: noise_level must be >= 0");
  std::vector<double> out(rewards.begin(), rewards.end());
  if (noise_level == 0.0) return out;
  Rng rng(seed);
  for (double& r : out) r += noise_level * rng.normal();
  return out;
}

PolicyParams make_initial_policy(const SyntheticTask& task, double coupling, double noise_scale,
                                 std::uint64_t seed) {
  if (!std::isfinite(coupling) || !(noise_scale >= 0.0))
    throw ValidationError("make_initial_policy: bad coupling/noise_scale");
  PolicyParams params(task.space);
  Rng rng(derive_seed(seed, {0x1417u}));
  for (int p = 0; p < task.space.num_prompts; ++p) {
    auto row = params.row(p);
    for (int v = 0; v < task.space.responses_per_prompt; ++v)
      row[static_cast<std::size_t>(v)] =
          coupling * task.utility_at(p, v) + noise_scale * rng.normal();
  }
  return params;
}

}  // namespace cream
