#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "cream/losses.hpp"
#include "cream/policy.hpp"

namespace cream {

// Ground-truth environment: a utility for every (prompt, response) cell,
// plus the supervised split used to warm-start training.
struct SyntheticTask {
  TaskSpace space;
  std::vector<double> utility;  // row-major num_prompts x responses_per_prompt
  std::vector<SftExample> sft_split;
  double noise_level = 0.0;  // reward-noise scale used by self-rewarding runs
  std::uint64_t seed = 0;

  double utility_at(int prompt, int response) const;
  // Highest-utility response, ties broken toward the lowest index.
  int best_response(int prompt) const;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticTask from_json(const nlohmann::json& j);
};

enum class UtilityDistribution { gap_controlled, uniform };

struct TaskGenOptions {
  UtilityDistribution distribution = UtilityDistribution::gap_controlled;
  // gap-controlled: the best response beats the runner-up by exactly this.
  double margin = 1.0;
  // Fraction of prompts regenerated with `ambiguous_margin` instead.
  double ambiguous_fraction = 0.0;
  double ambiguous_margin = 0.05;
  // Fraction of prompts included in the supervised split (at least one).
  double sft_fraction = 0.25;
  double noise_level = 0.0;
};

SyntheticTask generate_task(int num_prompts, int responses_per_prompt, std::uint64_t seed,
                            const TaskGenOptions& options = {});

// Fraction of prompts where the policy's greedy response is the true best.
double proxy_accuracy(const PolicyParams& policy, const SyntheticTask& task);

// rewards + noise_level * N(0, 1), elementwise with a fresh seeded stream.
// noise_level = 0 returns the input unchanged.
std::vector<double> perturb_rewards(std::span<const double> rewards, double noise_level,
                                    std::uint64_t seed);

// Desk analog of a pretrained checkpoint: logits partially aligned with the
// ground truth (coupling * utility) plus Gaussian disagreement.
PolicyParams make_initial_policy(const SyntheticTask& task, double coupling, double noise_scale,
                                 std::uint64_t seed);

}  // namespace cream
