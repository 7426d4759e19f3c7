#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cream/consistency.hpp"
#include "cream/pairs.hpp"
#include "cream/policy.hpp"
#include "cream/rewarding.hpp"
#include "cream/synthetic.hpp"

namespace cream {

enum class Method {
  cream,            // soft label = dataset consistency rate
  srlm,             // hard labels (soft label forced to 1)
  srlm_kl,          // hard labels + probability-ratio-gap penalty
  cream_no_rc,      // fixed soft label from config, no consistency estimate
  oracle,           // ground-truth rewards, hard labels
  ensemble,         // rewards combined across policy replicas, hard labels
  cream_dynamic,    // per-prompt soft labels
  cream_threshold,  // weight 1 above threshold, dataset rate below
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);

enum class OptimizerKind { adaptive_moments, plain_gradient };

struct TrainConfig {
  Method method = Method::cream;
  int iterations = 2;       // preference iterations after the supervised stage
  int n_candidates = 5;     // responses sampled per prompt per iteration
  double temperature = 0.8;
  double beta = 0.1;
  double learning_rate = 0.05;      // preference-stage step size
  double sft_learning_rate = 0.05;  // warm-start step size (always adaptive moments)
  int sft_epochs = 3;       // full-batch supervised steps
  int update_epochs = 1;    // passes over composed records per iteration
  // Update rule for the preference stage.  The supervised warm start always
  // uses adaptive moments: its job is to reach a good checkpoint, while the
  // preference stage must stay magnitude-sensitive when asked to (plain
  // gradient), since soft labels act through the gradient magnitude.
  OptimizerKind optimizer = OptimizerKind::adaptive_moments;
  std::uint64_t seed = 0;
  double kl_lambda = 0.0;          // srlm_kl penalty weight
  double fixed_consistency = 1.0;  // cream_no_rc soft label
  double threshold = 0.9;          // cream_threshold cutoff on (tau + 1) / 2
  EnsembleCombiner combiner = EnsembleCombiner::mean;
  double init_coupling = 0.0;  // initial logits = coupling * utility + noise
  double init_noise = 1.0;
  bool partition_prompts = false;  // split prompts across iterations vs reuse

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Everything one training stage produced, kept for audit and artifacts.
struct IterationSnapshot {
  std::string label;  // "M0", "M1", ...
  PolicyParams params;
  double proxy_accuracy = 0.0;
  std::vector<double> loss_trace;  // per-step losses at pre-step parameters
  std::optional<ConsistencyReport> consistency;
  std::vector<PreferenceRecord> records;
  int skipped_prompts = 0;
  std::vector<CandidateSet> candidates;
  std::vector<RankedList> ranks_current;   // judge ranking (composes the pairs)
  std::vector<RankedList> ranks_previous;  // previous-checkpoint ranking

  double mean_loss() const;
  nlohmann::json to_json() const;
};

// First-order optimizer over a flat parameter vector; adaptive_moments is
// the usual bias-corrected moment scheme, plain_gradient a raw step.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::size_t size);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

// Drives one self-rewarding run: supervised warm-start, then `iterations`
// rounds of sample -> judge -> compose -> update against the frozen
// reference checkpoint (always the initial parameters).
class Trainer {
 public:
  Trainer(SyntheticTask task, TrainConfig config);

  const IterationSnapshot& sft_stage();      // produces M1
  const IterationSnapshot& run_iteration();  // produces M2, M3, ...

  const std::vector<IterationSnapshot>& snapshots() const { return snapshots_; }
  const SyntheticTask& task() const { return task_; }
  const TrainConfig& config() const { return config_; }
  const PolicyParams& reference() const { return reference_; }
  const PolicyParams& current() const { return current_; }

 private:
  std::vector<int> iteration_prompts(int t) const;

  SyntheticTask task_;
  TrainConfig config_;
  PolicyParams reference_;  // frozen initial checkpoint
  PolicyParams current_;
  PolicyParams previous_;
  std::vector<PolicyParams> replicas_;  // ensemble only
  std::vector<IterationSnapshot> snapshots_;
  int iteration_ = 0;  // preference iterations completed
  bool sft_done_ = false;
};

// Full run: M0, M1, then config.iterations preference iterations.
std::vector<IterationSnapshot> run_experiment(const SyntheticTask& task,
                                              const TrainConfig& config);

// Alternating exact relabeling / guarded descent on a fixed candidate pool.
// The objective is the supervised loss plus the mean hard-label preference
// loss; relabeling picks the pointwise-smaller branch, so it can never
// increase the objective, and the descent steps are backtracked to be
// nonincreasing as well.
struct TwoStepTrace {
  double initial_loss = 0.0;  // after the initial labeling pass
  struct Step {
    double loss_after_learn = 0.0;    // L(theta_{t+1}, z_t)
    double loss_after_relabel = 0.0;  // L(theta_{t+1}, z_{t+1})
  };
  std::vector<Step> steps;

  // Interleaved objective values: initial, then learn/relabel per step.
  std::vector<double> sequence() const;
};

TwoStepTrace two_step_harness(const SyntheticTask& task, const TrainConfig& config,
                              int outer_iterations, int inner_steps);

// Fraction of composed best-vs-worst pairs whose winner has strictly lower
// ground-truth utility than the loser, when judging with intrinsic rewards
// plus sigma-scaled Gaussian noise at the given checkpoint.
double measure_flip_rate(const SyntheticTask& task, const PolicyParams& current,
                         const PolicyParams& reference, const TrainConfig& config, double sigma,
                         std::uint64_t seed, int draws_per_prompt = 20);

struct NoiseCalibration {
  double sigma = 0.0;
  double flip_rate = 0.0;
};

// Bisect the noise scale (common random numbers across candidates) until the
// measured flip rate reaches `target`.
NoiseCalibration calibrate_noise_level(const SyntheticTask& task, const PolicyParams& current,
                                       const PolicyParams& reference, const TrainConfig& config,
                                       double target, std::uint64_t seed);

}  // namespace cream
