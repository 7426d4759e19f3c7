#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cream/trainer.hpp"

namespace cream {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_err = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 12345;
  // Negative control: skew the soft label used by the regularized/soft
  // equivalence check so it must fail.
  bool corrupt_soft_label_bridge = false;
};

// Loss-level facts: gradient checks against central differences,
// closed-form reductions, stationarity of the soft-label gradient.
std::vector<CheckResult> verify_losses(const VerifyOptions& options);

// Distributional identities: the shifted regularizer/KL identity and the
// expected-rank-agreement identity, checked against Monte Carlo.
std::vector<CheckResult> verify_lemmas(const VerifyOptions& options);

// The soft-label equivalence of the regularized objective, and monotonicity
// of the alternating label/parameter minimization.
std::vector<CheckResult> verify_theorems(const VerifyOptions& options);

// Ranking statistics against brute-force oracles and hand examples.
std::vector<CheckResult> verify_rank_stats(const VerifyOptions& options);

// suite in {losses, lemmas, theorems, rank-stats, all}.
std::vector<CheckResult> verify_suite(const std::string& suite, const VerifyOptions& options);
std::vector<std::string> verify_suite_names();

// ---- experiment-level verification (used by the acceptance gate) --------

struct DirectionalSeedRun {
  std::uint64_t task_seed = 0;
  std::uint64_t train_seed = 0;
  double sigma = 0.0;
  double calibration_flip_rate = 0.0;
  std::vector<double> cream_accuracy;     // per snapshot label M0..
  std::vector<double> srlm_accuracy;
  std::vector<double> cream_consistency;  // per preference iteration
  std::vector<double> srlm_consistency;
};

struct DirectionalReport {
  std::vector<std::string> labels;  // snapshot labels M0..M(1+T)
  std::vector<DirectionalSeedRun> runs;
  double mean_cream_m1 = 0.0;
  double mean_cream_m3 = 0.0;
  double mean_srlm_m3 = 0.0;
  bool cream_beats_srlm = false;    // mean accuracy, final pinned label
  bool cream_no_regress = false;    // mean CREAM M3 >= mean CREAM M1
  bool srlm_declines = false;       // some consecutive mean-accuracy drop
  bool consistency_rises = false;   // CREAM: first preference iteration -> next
  std::string detail;
};

// Noisy self-rewarding comparison on a gap-controlled task: five seeded
// worlds, reward noise calibrated per world to a ~30% preference-flip rate
// at the post-SFT checkpoint, then matched runs of the soft-label and
// hard-label methods.
DirectionalReport run_directional_experiment();

// Exact baseline equivalences (bit-level where pinned):
//   hard-label method == soft-label method with the rate forced to 1,
//   fixed soft label is used verbatim,
//   zero-weight penalty == plain hard-label method.
std::vector<CheckResult> run_equivalence_checks();

}  // namespace cream
