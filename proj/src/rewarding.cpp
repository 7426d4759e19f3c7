#include "cream/rewarding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cream {

std::string reward_mode_name(RewardMode mode) {
  switch (mode) {
    case RewardMode::dpo_ratio: return "dpo_ratio";
    case RewardMode::likelihood: return "likelihood";
    case RewardMode::oracle_utility: return "oracle_utility";
    case RewardMode::ensemble_mean: return "ensemble_mean";
    case RewardMode::ensemble_worst: return "ensemble_worst";
  }
  return "unknown";
}

nlohmann::json RewardVector::to_json() const {
  return {{"prompt", prompt},
          {"scores", scores},
          {"mode", reward_mode_name(mode)},
          {"source", source}};
}

int RankedList::best_candidate() const {
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (ranks[i] == 1) return static_cast<int>(i);
  throw DataError("RankedList: no candidate holds rank 1");
}

int RankedList::worst_candidate() const {
  const int n = static_cast<int>(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (ranks[i] == n) return static_cast<int>(i);
  throw DataError("RankedList: no candidate holds the last rank");
}

nlohmann::json RankedList::to_json() const {
  return {{"ranks", ranks}, {"rewards", rewards.to_json()}};
}

static void check_batch(const CandidateSet& batch) {
  if (batch.responses.size() < 2)
    throw ValidationError("reward: candidate batch needs at least 2 responses");
}

RewardVector intrinsic_reward(const CandidateSet& batch, const PolicyParams& policy,
                              const PolicyParams& reference) {
  check_batch(batch);
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = RewardMode::dpo_ratio;
  out.source = "policy/reference";
  out.scores.reserve(batch.responses.size());
  for (int resp : batch.responses)
    out.scores.push_back(policy.log_prob(batch.prompt, resp) -
                         reference.log_prob(batch.prompt, resp));
  return out;
}

static const std::vector<double>& table_column(const CandidateSet& batch,
                                               const std::string& label) {
  const auto it = batch.log_probs.find(label);
  if (it == batch.log_probs.end())
    throw DataError("reward: candidate batch has no log-prob column '" + label + "'");
  if (it->second.size() != batch.responses.size())
    throw DataError("reward: log-prob column '" + label + "' has the wrong length");
  return it->second;
}

RewardVector intrinsic_reward_from_table(const CandidateSet& batch,
                                         const std::string& policy_label,
                                         const std::string& reference_label) {
  check_batch(batch);
  const auto& lp = table_column(batch, policy_label);
  const auto& lr = table_column(batch, reference_label);
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = RewardMode::dpo_ratio;
  out.source = policy_label + "/" + reference_label;
  out.scores.reserve(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) out.scores.push_back(lp[i] - lr[i]);
  return out;
}

RewardVector likelihood_reward(const CandidateSet& batch, const PolicyParams& policy) {
  check_batch(batch);
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = RewardMode::likelihood;
  out.source = "policy";
  out.scores.reserve(batch.responses.size());
  for (int resp : batch.responses) out.scores.push_back(policy.log_prob(batch.prompt, resp));
  return out;
}

RewardVector likelihood_reward_from_table(const CandidateSet& batch, const std::string& label) {
  check_batch(batch);
  const auto& lp = table_column(batch, label);
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = RewardMode::likelihood;
  out.source = label;
  out.scores = lp;
  return out;
}

RewardVector oracle_reward(const CandidateSet& batch, const SyntheticTask& task) {
  check_batch(batch);
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = RewardMode::oracle_utility;
  out.source = "oracle";
  out.scores.reserve(batch.responses.size());
  for (int resp : batch.responses) out.scores.push_back(task.utility_at(batch.prompt, resp));
  return out;
}

RewardVector ensemble_reward(const CandidateSet& batch, std::span<const PolicyParams> policies,
                             const PolicyParams& reference, EnsembleCombiner combiner) {
  check_batch(batch);
  if (policies.empty()) throw ValidationError("ensemble_reward: needs at least one policy");
  RewardVector out;
  out.prompt = batch.prompt;
  out.mode = combiner == EnsembleCombiner::mean ? RewardMode::ensemble_mean
                                                : RewardMode::ensemble_worst;
  out.source = "ensemble[" + std::to_string(policies.size()) + "]/reference";
  const std::size_t n = batch.responses.size();
  out.scores.assign(n, combiner == EnsembleCombiner::mean
                           ? 0.0
                           : std::numeric_limits<double>::infinity());
  for (const PolicyParams& policy : policies) {
    const RewardVector one = intrinsic_reward(batch, policy, reference);
    for (std::size_t i = 0; i < n; ++i) {
      if (combiner == EnsembleCombiner::mean)
        out.scores[i] += one.scores[i];
      else
        out.scores[i] = std::min(out.scores[i], one.scores[i]);
    }
  }
  if (combiner == EnsembleCombiner::mean)
    for (double& s : out.scores) s /= static_cast<double>(policies.size());
  return out;
}

RankedList rank(const RewardVector& rewards) {
  const std::size_t n = rewards.scores.size();
  if (n < 2) throw ValidationError("rank: need at least 2 candidates");
  for (double s : rewards.scores)
    if (!std::isfinite(s)) throw DataError("rank: non-finite reward score");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = rewards.scores[static_cast<std::size_t>(a)];
    const double rb = rewards.scores[static_cast<std::size_t>(b)];
    if (ra != rb) return ra > rb;
    return a < b;
  });

  RankedList out;
  out.rewards = rewards;
  out.ranks.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos)
    out.ranks[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
  return out;
}

}  // namespace cream
