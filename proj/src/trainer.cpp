#include "cream/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cream/rng.hpp"

namespace cream {

std::string method_name(Method m) {
  switch (m) {
    case Method::cream: return "CREAM";
    case Method::srlm: return "SRLM";
    case Method::srlm_kl: return "SRLM_KL";
    case Method::cream_no_rc: return "CREAM_noRC";
    case Method::oracle: return "ORACLE";
    case Method::ensemble: return "ENSEMBLE";
    case Method::cream_dynamic: return "CREAM_dynamic";
    case Method::cream_threshold: return "CREAM_threshold";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::cream, Method::srlm, Method::srlm_kl, Method::cream_no_rc,
                   Method::oracle, Method::ensemble, Method::cream_dynamic,
                   Method::cream_threshold})
    if (method_name(m) == name) return m;
  throw ValidationError("unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ValidationError("TrainConfig: iterations must be >= 0");
  if (n_candidates < 2) throw ValidationError("TrainConfig: n_candidates must be >= 2");
  if (!(temperature > 0.0)) throw ValidationError("TrainConfig: temperature must be > 0");
  if (!(beta > 0.0)) throw ValidationError("TrainConfig: beta must be > 0");
  if (!(learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate must be > 0");
  if (!(sft_learning_rate > 0.0))
    throw ValidationError("TrainConfig: sft_learning_rate must be > 0");
  if (sft_epochs < 0) throw ValidationError("TrainConfig: sft_epochs must be >= 0");
  if (update_epochs < 1) throw ValidationError("TrainConfig: update_epochs must be >= 1");
  if (!(kl_lambda >= 0.0)) throw ValidationError("TrainConfig: kl_lambda must be >= 0");
  if (!(fixed_consistency >= 0.0 && fixed_consistency <= 1.0))
    throw ValidationError("TrainConfig: fixed_consistency must lie in [0, 1]");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError("TrainConfig: threshold must lie in [0, 1]");
  if (!std::isfinite(init_coupling) || !(init_noise >= 0.0))
    throw ValidationError("TrainConfig: bad init_coupling/init_noise");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"method", method_name(method)},
          {"iterations", iterations},
          {"n_candidates", n_candidates},
          {"temperature", temperature},
          {"beta", beta},
          {"learning_rate", learning_rate},
          {"sft_learning_rate", sft_learning_rate},
          {"sft_epochs", sft_epochs},
          {"update_epochs", update_epochs},
          {"optimizer", optimizer == OptimizerKind::adaptive_moments ? "adaptive-moments"
                                                                     : "plain-gradient"},
          {"seed", seed},
          {"kl_lambda", kl_lambda},
          {"fixed_consistency", fixed_consistency},
          {"threshold", threshold},
          {"combiner", combiner == EnsembleCombiner::mean ? "mean" : "worst"},
          {"init_coupling", init_coupling},
          {"init_noise", init_noise},
          {"partition_prompts", partition_prompts}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.contains("method"))
    throw ValidationError("TrainConfig: missing required field 'method'");
  TrainConfig c;
  c.method = method_from_name(j.at("method").get<std::string>());
  c.iterations = j.value("iterations", c.iterations);
  c.n_candidates = j.value("n_candidates", c.n_candidates);
  c.temperature = j.value("temperature", c.temperature);
  c.beta = j.value("beta", c.beta);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.sft_learning_rate = j.value("sft_learning_rate", c.sft_learning_rate);
  c.sft_epochs = j.value("sft_epochs", c.sft_epochs);
  c.update_epochs = j.value("update_epochs", c.update_epochs);
  if (j.contains("optimizer")) {
    const std::string o = j.at("optimizer").get<std::string>();
    if (o == "adaptive-moments") c.optimizer = OptimizerKind::adaptive_moments;
    else if (o == "plain-gradient") c.optimizer = OptimizerKind::plain_gradient;
    else throw ValidationError("TrainConfig: unknown optimizer '" + o + "'");
  }
  c.seed = j.value("seed", c.seed);
  c.kl_lambda = j.value("kl_lambda", c.kl_lambda);
  c.fixed_consistency = j.value("fixed_consistency", c.fixed_consistency);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("combiner")) {
    const std::string comb = j.at("combiner").get<std::string>();
    if (comb == "mean") c.combiner = EnsembleCombiner::mean;
    else if (comb == "worst") c.combiner = EnsembleCombiner::worst;
    else throw ValidationError("TrainConfig: unknown combiner '" + comb + "'");
  }
  c.init_coupling = j.value("init_coupling", c.init_coupling);
  c.init_noise = j.value("init_noise", c.init_noise);
  c.partition_prompts = j.value("partition_prompts", c.partition_prompts);
  c.validate();
  return c;
}

double IterationSnapshot::mean_loss() const {
  if (loss_trace.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double v : loss_trace) acc += v;
  return acc / static_cast<double>(loss_trace.size());
}

nlohmann::json IterationSnapshot::to_json() const {
  nlohmann::json j{{"label", label},
                   {"params", params.to_json()},
                   {"proxy_accuracy", proxy_accuracy},
                   {"loss_trace", loss_trace},
                   {"skipped_prompts", skipped_prompts}};
  if (!loss_trace.empty()) j["mean_loss"] = mean_loss();
  if (consistency) j["consistency"] = consistency->to_json();
  nlohmann::json recs = nlohmann::json::array();
  for (const PreferenceRecord& r : records) recs.push_back(r.to_json());
  j["records"] = std::move(recs);
  nlohmann::json cands = nlohmann::json::array();
  for (const CandidateSet& c : candidates) cands.push_back(c.to_json());
  j["candidates"] = std::move(cands);
  nlohmann::json rc = nlohmann::json::array(), rp = nlohmann::json::array();
  for (const RankedList& r : ranks_current) rc.push_back(r.to_json());
  for (const RankedList& r : ranks_previous) rp.push_back(r.to_json());
  j["ranks_current"] = std::move(rc);
  j["ranks_previous"] = std::move(rp);
  return j;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::size_t size)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw ValidationError("Optimizer: learning_rate must be > 0");
  if (kind_ == OptimizerKind::adaptive_moments) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size())
    throw ValidationError("Optimizer: parameter/gradient size mismatch");
  if (kind_ == OptimizerKind::plain_gradient) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
    return;
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
  }
}

namespace {

constexpr double kReplicaRates[] = {0.7, 1.0, 3.0};  // ensemble step-size spread
constexpr std::size_t kCanonicalReplica = 1;

void check_finite(const PolicyParams& params, const char* where) {
  for (double x : params.flat())
    if (!std::isfinite(x)) throw TrainingError(std::string(where) + ": non-finite parameters");
}

}  // namespace

Trainer::Trainer(SyntheticTask task, TrainConfig config)
    : task_(std::move(task)), config_(config) {
  task_.validate();
  config_.validate();
  if (config_.partition_prompts && config_.iterations > 0 &&
      task_.space.num_prompts < config_.iterations)
    throw ValidationError("Trainer: partitioning needs at least one prompt per iteration");

  reference_ = make_initial_policy(task_, config_.init_coupling, config_.init_noise,
                                   derive_seed(config_.seed, {1}));
  current_ = reference_;
  previous_ = reference_;

  IterationSnapshot m0;
  m0.label = "M0";
  m0.params = current_;
  m0.proxy_accuracy = proxy_accuracy(current_, task_);
  snapshots_.push_back(std::move(m0));
}

const IterationSnapshot& Trainer::sft_stage() {
  if (sft_done_) throw ValidationError("Trainer: sft_stage already ran");
  sft_done_ = true;

  IterationSnapshot snap;
  snap.label = "M1";
  Optimizer opt(OptimizerKind::adaptive_moments, config_.sft_learning_rate,
                current_.flat().size());
  for (int epoch = 0; epoch < config_.sft_epochs; ++epoch) {
    const LossEval eval = sft_loss(current_, task_.sft_split);
    if (!std::isfinite(eval.value)) throw TrainingError("sft_stage: non-finite loss");
    snap.loss_trace.push_back(eval.value);
    opt.step(current_.flat(), eval.grad);
    check_finite(current_, "sft_stage");
  }
  snap.params = current_;
  snap.proxy_accuracy = proxy_accuracy(current_, task_);
  snapshots_.push_back(std::move(snap));

  previous_ = current_;
  if (config_.method == Method::ensemble)
    replicas_.assign(std::size(kReplicaRates), current_);
  return snapshots_.back();
}

std::vector<int> Trainer::iteration_prompts(int t) const {
  const int P = task_.space.num_prompts;
  std::vector<int> all(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) all[static_cast<std::size_t>(p)] = p;
  if (!config_.partition_prompts) return all;

  // Seeded shuffle, then contiguous blocks: iteration t consumes block t-1.
  Rng rng(derive_seed(config_.seed, {0xD}));
  for (int i = P - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(k)]);
  }
  const int T = std::max(1, config_.iterations);
  const int block = (t - 1) % T;
  const int start = block * P / T;
  const int end = (block + 1) * P / T;
  std::vector<int> out(all.begin() + start, all.begin() + end);
  std::sort(out.begin(), out.end());
  return out;
}

const IterationSnapshot& Trainer::run_iteration() {
  if (!sft_done_) throw ValidationError("Trainer: run sft_stage before iterations");
  const int t = ++iteration_;

  const std::vector<int> prompts = iteration_prompts(t);

  std::vector<CandidateSet> batch;
  std::vector<RankedList> ranks_j, ranks_k;
  std::vector<double> taus;
  batch.reserve(prompts.size());

  const bool noisy = task_.noise_level > 0.0;
  for (int p : prompts) {
    Rng sample_rng(derive_seed(config_.seed, {0xA, static_cast<std::uint64_t>(t),
                                              static_cast<std::uint64_t>(p)}));
    CandidateSet cs = sample_candidates(current_, p, config_.n_candidates,
                                        config_.temperature, sample_rng);
    attach_log_probs(cs, "current", current_);
    attach_log_probs(cs, "previous", previous_);
    attach_log_probs(cs, "reference", reference_);

    RewardVector rj;
    if (config_.method == Method::oracle) {
      rj = oracle_reward(cs, task_);
    } else if (config_.method == Method::ensemble) {
      rj = ensemble_reward(cs, replicas_, reference_, config_.combiner);
    } else {
      rj = intrinsic_reward_from_table(cs, "current", "reference");
    }
    if (noisy && config_.method != Method::oracle)
      rj.scores = perturb_rewards(rj.scores, task_.noise_level,
                                  derive_seed(config_.seed, {0xB, static_cast<std::uint64_t>(t),
                                                             static_cast<std::uint64_t>(p)}));

    RewardVector rk = (t == 1) ? likelihood_reward_from_table(cs, "reference")
                               : intrinsic_reward_from_table(cs, "previous", "reference");
    if (noisy)
      rk.scores = perturb_rewards(rk.scores, task_.noise_level,
                                  derive_seed(config_.seed, {0xC, static_cast<std::uint64_t>(t),
                                                             static_cast<std::uint64_t>(p)}));

    RankedList lj = rank(rj);
    RankedList lk = rank(rk);
    taus.push_back(kendall_tau(lj.ranks, lk.ranks));
    batch.push_back(std::move(cs));
    ranks_j.push_back(std::move(lj));
    ranks_k.push_back(std::move(lk));
  }

  IterationSnapshot snap;
  snap.label = "M" + std::to_string(1 + t);
  snap.consistency = ConsistencyReport::build(ranks_j, ranks_k);

  SoftLabel dataset_c(1.0);
  ComposeVariant variant = ComposeVariant::averaged;
  switch (config_.method) {
    case Method::cream:
      dataset_c = SoftLabel(snap.consistency->rate);
      break;
    case Method::cream_no_rc:
      dataset_c = SoftLabel(config_.fixed_consistency);
      break;
    case Method::cream_dynamic:
      dataset_c = SoftLabel(snap.consistency->rate);
      variant = ComposeVariant::dynamic;
      break;
    case Method::cream_threshold:
      dataset_c = SoftLabel(snap.consistency->rate);
      variant = ComposeVariant::thresholded;
      break;
    default:
      break;  // hard-label methods keep c = 1
  }
  ComposeResult composed =
      compose_pairs(batch, ranks_j, taus, dataset_c, variant, config_.threshold);

  // One (or more) passes over the records against the frozen reference.
  const PolicyParams before_update = current_;
  if (config_.method == Method::ensemble) {
    std::vector<Optimizer> opts;
    for (double rate : kReplicaRates)
      opts.emplace_back(config_.optimizer, config_.learning_rate * rate,
                        current_.flat().size());
    for (int epoch = 0; epoch < config_.update_epochs; ++epoch) {
      for (const PreferenceRecord& rec : composed.records) {
        PairLossSpec spec;
        spec.kind = PairLossSpec::Kind::soft;
        spec.z = 1;
        spec.c = rec.soft_weight;
        for (std::size_t r = 0; r < replicas_.size(); ++r) {
          const LossEval eval = pair_loss_on_policy(spec, replicas_[r], reference_, rec.prompt,
                                                    rec.winner, rec.loser, config_.beta);
          if (!std::isfinite(eval.value))
            throw TrainingError("run_iteration: non-finite loss");
          if (r == kCanonicalReplica) snap.loss_trace.push_back(eval.value);
          opts[r].step(replicas_[r].flat(), eval.grad);
        }
      }
    }
    for (PolicyParams& replica : replicas_) check_finite(replica, "run_iteration");
    previous_ = before_update;
    current_ = replicas_[kCanonicalReplica];
  } else {
    Optimizer opt(config_.optimizer, config_.learning_rate, current_.flat().size());
    for (int epoch = 0; epoch < config_.update_epochs; ++epoch) {
      for (const PreferenceRecord& rec : composed.records) {
        PairLossSpec spec;
        if (config_.method == Method::srlm_kl) {
          spec.kind = PairLossSpec::Kind::kl;
          spec.lambda = config_.kl_lambda;
        } else {
          spec.kind = PairLossSpec::Kind::soft;
          spec.z = 1;
          spec.c = rec.soft_weight;
        }
        const LossEval eval = pair_loss_on_policy(spec, current_, reference_, rec.prompt,
                                                  rec.winner, rec.loser, config_.beta);
        if (!std::isfinite(eval.value)) throw TrainingError("run_iteration: non-finite loss");
        snap.loss_trace.push_back(eval.value);
        opt.step(current_.flat(), eval.grad);
      }
    }
    check_finite(current_, "run_iteration");
    previous_ = before_update;
  }

  snap.params = current_;
  snap.proxy_accuracy = proxy_accuracy(current_, task_);
  snap.records = std::move(composed.records);
  snap.skipped_prompts = composed.skipped;
  snap.candidates = std::move(batch);
  snap.ranks_current = std::move(ranks_j);
  snap.ranks_previous = std::move(ranks_k);
  snapshots_.push_back(std::move(snap));
  return snapshots_.back();
}

std::vector<IterationSnapshot> run_experiment(const SyntheticTask& task,
                                              const TrainConfig& config) {
  Trainer trainer(task, config);
  trainer.sft_stage();
  for (int t = 0; t < config.iterations; ++t) trainer.run_iteration();
  return trainer.snapshots();
}

namespace {

struct PoolPair {
  int prompt = 0;
  int y = 0;
  int y_prime = 0;
  int z = 1;
};

struct Objective {
  const SyntheticTask* task;
  const PolicyParams* reference;
  double beta;

  double value(const PolicyParams& theta, const std::vector<PoolPair>& pool) const {
    double acc = sft_loss(theta, task->sft_split).value;
    if (pool.empty()) return acc;
    double pair_acc = 0.0;
    for (const PoolPair& pp : pool) {
      const LogRatioPair pair =
          make_log_ratio_pair(theta, *reference, pp.prompt, pp.y, pp.y_prime, beta);
      pair_acc += dpo_loss(pair, pp.z).value;
    }
    return acc + pair_acc / static_cast<double>(pool.size());
  }

  LossEval eval(const PolicyParams& theta, const std::vector<PoolPair>& pool) const {
    LossEval out = sft_loss(theta, task->sft_split);
    if (pool.empty()) return out;
    const double inv = 1.0 / static_cast<double>(pool.size());
    double pair_acc = 0.0;
    for (const PoolPair& pp : pool) {
      PairLossSpec spec;
      spec.kind = PairLossSpec::Kind::preference;
      spec.z = pp.z;
      const LossEval e = pair_loss_on_policy(spec, theta, *reference, pp.prompt, pp.y,
                                             pp.y_prime, beta);
      pair_acc += e.value;
      for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += inv * e.grad[i];
    }
    out.value += pair_acc * inv;
    return out;
  }
};

}  // namespace

std::vector<double> TwoStepTrace::sequence() const {
  std::vector<double> seq{initial_loss};
  for (const Step& s : steps) {
    seq.push_back(s.loss_after_learn);
    seq.push_back(s.loss_after_relabel);
  }
  return seq;
}

TwoStepTrace two_step_harness(const SyntheticTask& task, const TrainConfig& config,
                              int outer_iterations, int inner_steps) {
  if (outer_iterations < 0 || inner_steps < 0)
    throw ValidationError("two_step_harness: negative iteration counts");
  task.validate();
  config.validate();

  const PolicyParams reference = make_initial_policy(
      task, config.init_coupling, config.init_noise, derive_seed(config.seed, {1}));
  PolicyParams theta = reference;

  // Fixed comparison pool: distinct responses sampled once from the initial
  // policy, all unordered pairs per prompt.
  std::vector<PoolPair> pool;
  for (int p = 0; p < task.space.num_prompts; ++p) {
    Rng rng(derive_seed(config.seed, {0xE, static_cast<std::uint64_t>(p)}));
    CandidateSet cs =
        sample_candidates(reference, p, config.n_candidates, config.temperature, rng);
    std::vector<int> uniq = cs.responses;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (std::size_t a = 0; a < uniq.size(); ++a)
      for (std::size_t b = a + 1; b < uniq.size(); ++b)
        pool.push_back({p, uniq[a], uniq[b], 1});
  }

  const Objective objective{&task, &reference, config.beta};
  auto relabel = [&](const PolicyParams& at) {
    for (PoolPair& pp : pool) pp.z = label_z(at, reference, pp.prompt, pp.y, pp.y_prime);
  };

  relabel(theta);
  TwoStepTrace trace;
  trace.initial_loss = objective.value(theta, pool);

  for (int outer = 0; outer < outer_iterations; ++outer) {
    // Learn: guarded descent keeps every accepted step nonincreasing.
    double current = objective.value(theta, pool);
    for (int step = 0; step < inner_steps; ++step) {
      const LossEval eval = objective.eval(theta, pool);
      double lr = config.learning_rate;
      bool accepted = false;
      for (int tries = 0; tries < 40; ++tries) {
        PolicyParams trial = theta;
        for (std::size_t i = 0; i < trial.flat().size(); ++i)
          trial.flat()[i] -= lr * eval.grad[i];
        const double trial_loss = objective.value(trial, pool);
        if (std::isfinite(trial_loss) && trial_loss <= current) {
          theta = std::move(trial);
          current = trial_loss;
          accepted = true;
          break;
        }
        lr *= 0.5;
      }
      if (!accepted) break;  // stationary up to backtracking resolution
    }
    TwoStepTrace::Step step;
    step.loss_after_learn = objective.value(theta, pool);
    relabel(theta);
    step.loss_after_relabel = objective.value(theta, pool);
    trace.steps.push_back(step);
  }
  return trace;
}

double measure_flip_rate(const SyntheticTask& task, const PolicyParams& current,
                         const PolicyParams& reference, const TrainConfig& config, double sigma,
                         std::uint64_t seed, int draws_per_prompt) {
  if (!(sigma >= 0.0)) throw ValidationError("measure_flip_rate: sigma must be >= 0");
  if (draws_per_prompt < 1)
    throw ValidationError("measure_flip_rate: draws_per_prompt must be >= 1");
  long long flips = 0, total = 0;
  for (int p = 0; p < task.space.num_prompts; ++p) {
    for (int d = 0; d < draws_per_prompt; ++d) {
      Rng sample_rng(derive_seed(seed, {0xF1, static_cast<std::uint64_t>(p),
                                        static_cast<std::uint64_t>(d)}));
      const CandidateSet cs = sample_candidates(current, p, config.n_candidates,
                                                config.temperature, sample_rng);
      RewardVector rewards = intrinsic_reward(cs, current, reference);
      if (sigma > 0.0) {
        // Noise seeds do not depend on sigma: common random numbers keep the
        // flip rate monotone during calibration.
        Rng noise_rng(derive_seed(seed, {0xF2, static_cast<std::uint64_t>(p),
                                         static_cast<std::uint64_t>(d)}));
        for (double& s : rewards.scores) s += sigma * noise_rng.normal();
      }
      const RankedList ranked = rank(rewards);
      const int winner = cs.responses[static_cast<std::size_t>(ranked.best_candidate())];
      const int loser = cs.responses[static_cast<std::size_t>(ranked.worst_candidate())];
      if (winner == loser) continue;
      const double uw = task.utility_at(p, winner);
      const double ul = task.utility_at(p, loser);
      if (uw == ul) continue;
      ++total;
      if (uw < ul) ++flips;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(flips) / static_cast<double>(total);
}

NoiseCalibration calibrate_noise_level(const SyntheticTask& task, const PolicyParams& current,
                                       const PolicyParams& reference, const TrainConfig& config,
                                       double target, std::uint64_t seed) {
  if (!(target > 0.0 && target < 0.5))
    throw ValidationError("calibrate_noise_level: target must lie in (0, 0.5)");
  const auto flip = [&](double sigma) {
    return measure_flip_rate(task, current, reference, config, sigma, seed);
  };
  NoiseCalibration best{0.0, flip(0.0)};
  if (best.flip_rate >= target) return best;

  double lo = 0.0, hi = 0.25, f_hi = flip(hi);
  while (f_hi < target && hi < 64.0) {
    lo = hi;
    hi *= 2.0;
    f_hi = flip(hi);
  }
  best = {hi, f_hi};
  for (int it = 0; it < 48; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = flip(mid);
    if (std::abs(f_mid - target) < std::abs(best.flip_rate - target)) best = {mid, f_mid};
    if (f_mid < target)
      lo = mid;
    else
      hi = mid;
  }
  return best;
}

}  // namespace cream
