#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "cream/policy.hpp"
#include "cream/rewarding.hpp"

namespace cream {

// Kendall rank correlation in the pairwise-indicator form: the average over
// unordered candidate pairs of sign(a_i - a_j) * sign(b_i - b_j).  Ties in
// either list contribute zero; no tie-corrected denominator is applied.
double kendall_tau(std::span<const int> ranks_a, std::span<const int> ranks_b);

// Spearman rank correlation, tie-free closed form:
//   1 - 6 * sum d_i^2 / (N (N^2 - 1)),  d_i = a_i - b_i.
double spearman_rho(std::span<const int> ranks_a, std::span<const int> ranks_b);

// 1 when both lists agree on which candidate is best AND which is worst.
int top_order(std::span<const int> ranks_a, std::span<const int> ranks_b);

// Dataset consistency rate: mean over prompts of (tau_j + 1) / 2.
double consistency_rate(std::span<const double> taus);

// Probability-weighted disagreement functional between two checkpoints'
// implicit rewards on one prompt (reference shared):
//   lambda = 2 * sum_{y,y'} pi_cur(y) pi_cur(y')
//            * 1[r_cur(y) >= r_cur(y')] * 1[r_prev(y) < r_prev(y')].
// The expected Kendall tau of rankings produced by the two checkpoints over
// i.i.d. candidate draws from pi_cur equals 1 - 2 * lambda.
double estimate_lambda(const PolicyParams& current, const PolicyParams& previous,
                       const PolicyParams& reference, int prompt);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

Summary summarize(std::span<const double> values);

struct PromptConsistency {
  int prompt = 0;
  double tau = 0.0;
  double spearman = 0.0;
  int toporder = 0;
};

// Per-prompt ranking agreement between two checkpoints plus aggregates.
struct ConsistencyReport {
  std::vector<PromptConsistency> rows;
  double rate = 0.0;  // mean (tau + 1) / 2
  Summary tau;
  Summary spearman;
  Summary toporder;

  static ConsistencyReport build(std::span<const RankedList> current,
                                 std::span<const RankedList> previous);

  // Columns: prompt_id,tau,spearman,toporder; then `mean` and `std` rows.
  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

}  // namespace cream
