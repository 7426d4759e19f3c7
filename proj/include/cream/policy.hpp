#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cream/errors.hpp"
#include "cream/rng.hpp"

namespace cream {

// Finite prompt/response grid: every prompt shares one response vocabulary.
struct TaskSpace {
  int num_prompts = 0;
  int responses_per_prompt = 0;

  void validate() const;
  bool operator==(const TaskSpace&) const = default;
};

// Tabular categorical policy: one logits row per prompt, responses drawn
// from softmax(row).  Exactly solvable stand-in for a language model.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(TaskSpace space, double init = 0.0);

  const TaskSpace& space() const { return space_; }
  int num_prompts() const { return space_.num_prompts; }
  int responses_per_prompt() const { return space_.responses_per_prompt; }

  double logit(int prompt, int response) const;
  double& logit(int prompt, int response);
  std::span<const double> row(int prompt) const;
  std::span<double> row(int prompt);
  std::span<double> flat() { return logits_; }
  std::span<const double> flat() const { return logits_; }

  // log softmax(row)[response]; always <= 0 up to round-off.
  double log_prob(int prompt, int response) const;
  std::vector<double> log_prob_row(int prompt) const;
  std::vector<double> prob_row(int prompt) const;

  // d log_prob(prompt, response) / d row = onehot(response) - softmax(row).
  std::vector<double> grad_log_prob(int prompt, int response) const;

  // Greedy decode with deterministic tie-break toward the lowest index.
  int argmax_response(int prompt) const;

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);

  bool operator==(const PolicyParams&) const = default;

 private:
  void check_prompt(int prompt) const;
  void check_response(int response) const;

  TaskSpace space_;
  std::vector<double> logits_;  // row-major num_prompts x responses_per_prompt
};

// N sampled responses for one prompt, plus log-prob columns cached per
// checkpoint label for audit serialization and table-based reward reads.
struct CandidateSet {
  int prompt = 0;
  std::vector<int> responses;
  std::map<std::string, std::vector<double>> log_probs;

  nlohmann::json to_json() const;
  static CandidateSet from_json(const nlohmann::json& j);
};

struct CandidateBatch {
  std::vector<CandidateSet> rows;
};

// Draw n i.i.d. responses from softmax(row / temperature) by inverse CDF.
CandidateSet sample_candidates(const PolicyParams& params, int prompt, int n,
                               double temperature, Rng& rng);

// Cache log pi_params(y | prompt) for each stored candidate under `label`.
void attach_log_probs(CandidateSet& set, const std::string& label,
                      const PolicyParams& params);

// Numerically stable helpers shared across modules.
double log_sum_exp(std::span<const double> xs);
std::vector<double> softmax(std::span<const double> xs);

}  // namespace cream
