#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cream/policy.hpp"
#include "cream/synthetic.hpp"

namespace cream {

enum class RewardMode { dpo_ratio, likelihood, oracle_utility, ensemble_mean, ensemble_worst };

std::string reward_mode_name(RewardMode mode);

// One score per candidate of a prompt, tagged with how it was produced.
struct RewardVector {
  int prompt = 0;
  std::vector<double> scores;
  RewardMode mode = RewardMode::dpo_ratio;
  std::string source;  // checkpoint label(s), for audit

  nlohmann::json to_json() const;
};

// ranks[i] is the 1-based position of candidate i when sorted by reward,
// descending, ties broken toward the lower candidate index.  Ranks are a
// bijection onto {1..N}.
struct RankedList {
  std::vector<int> ranks;
  RewardVector rewards;

  int best_candidate() const;   // index with rank 1
  int worst_candidate() const;  // index with rank N

  nlohmann::json to_json() const;
};

// Implicit policy-as-judge reward: log pi_policy(y|x) - log pi_reference(y|x).
RewardVector intrinsic_reward(const CandidateSet& batch, const PolicyParams& policy,
                              const PolicyParams& reference);

// Same computation read from the batch's cached log-prob table; a missing
// checkpoint column raises DataError.
RewardVector intrinsic_reward_from_table(const CandidateSet& batch,
                                         const std::string& policy_label,
                                         const std::string& reference_label);

// First-iteration fallback judge: score candidates by log pi_policy(y|x).
RewardVector likelihood_reward(const CandidateSet& batch, const PolicyParams& policy);
RewardVector likelihood_reward_from_table(const CandidateSet& batch, const std::string& label);

// Ground-truth scores; only synthetic tasks can provide these.
RewardVector oracle_reward(const CandidateSet& batch, const SyntheticTask& task);

enum class EnsembleCombiner { mean, worst };

// Combine the intrinsic rewards of several policies (shared reference):
// elementwise mean or elementwise minimum ("worst").
RewardVector ensemble_reward(const CandidateSet& batch, std::span<const PolicyParams> policies,
                             const PolicyParams& reference, EnsembleCombiner combiner);

// Dense ranking by descending reward with index tie-break.  Non-finite
// rewards raise DataError.
RankedList rank(const RewardVector& rewards);

}  // namespace cream
