#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cream/errors.hpp"
#include "cream/policy.hpp"

namespace cream {

// Numerically stable scalar helpers (shared by losses and verification).
double stable_sigmoid(double x);
double stable_softplus(double x);   // log(1 + e^x)
double stable_log_sigmoid(double x);  // -softplus(-x)

// Soft preference label; valid range [0, 1].
struct SoftLabel {
  double value;
  SoftLabel(double v) : value(v) {  // NOLINT: implicit by design
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("SoftLabel: value must lie in [0, 1]");
  }
};

// One preference comparison in log-ratio space:
//   ratio_* = log pi_theta(y* | x) - log pi_ref(y* | x).
struct LogRatioPair {
  double ratio_preferred = 0.0;
  double ratio_rejected = 0.0;
  double beta = 0.1;

  double delta() const { return ratio_preferred - ratio_rejected; }
};

LogRatioPair make_log_ratio_pair(const PolicyParams& policy, const PolicyParams& reference,
                                 int prompt, int preferred, int rejected, double beta);

// Loss value plus partials w.r.t. the two log-ratios.  The partials w.r.t.
// the four underlying log-probs follow by sign: d/d log pi_theta(y) =
// d_ratio_preferred, d/d log pi_ref(y) = -d_ratio_preferred, and likewise
// for y' via d_ratio_rejected.
struct PairLoss {
  double value = 0.0;
  double d_ratio_preferred = 0.0;
  double d_ratio_rejected = 0.0;
};

// Binary-label preference loss: -log sigma(beta * delta) when z = 1,
// -log sigma(-beta * delta) when z = 0.
PairLoss dpo_loss(const LogRatioPair& pair, int z);

// Label-symmetric consistency regularizer:
//   -log sigma(beta * delta) - log sigma(-beta * delta).
// Equals dpo_loss(z=1) + dpo_loss(z=0); minimum 2*log(2) at delta = 0.
PairLoss reg_loss(const LogRatioPair& pair);

// Soft-label preference loss: c * dpo(z) + (1 - c) * dpo(1 - z).
// Gradient in delta is beta * (sigma(beta * delta) - c) for z = 1, so it is
// stationary exactly where sigma(beta * delta) = c.
PairLoss cream_loss(const LogRatioPair& pair, int z, SoftLabel c);

// dpo(z) + lambda * reg.  Identical (up to the scale 1 + 2*lambda) to
// cream_loss with c = (1 + lambda) / (1 + 2*lambda).
PairLoss regularized_loss(const LogRatioPair& pair, int z, double lambda);

// dpo(z=1) plus lambda * (pi_theta(y)/pi_ref(y) - pi_theta(y')/pi_ref(y'))^2,
// the penalty taken in probability-ratio space.  lambda = 0 reproduces
// dpo_loss bit-for-bit.
PairLoss kl_penalty_loss(const LogRatioPair& pair, double lambda);

// Supervised fine-tuning example: teach `target` for `prompt`.
struct SftExample {
  int prompt = 0;
  int target = 0;
};

// Loss value with gradient over the full logits table (row-major).
struct LossEval {
  double value = 0.0;
  std::vector<double> grad;
};

// Mean negative log-likelihood of the targets.
LossEval sft_loss(const PolicyParams& params, std::span<const SftExample> data);

// Selects one pair-loss family with its parameters, for policy-level
// evaluation through a single code path (training uses the same path the
// gradient checker validates).
struct PairLossSpec {
  enum class Kind { preference, regularizer, soft, regularized, kl } kind = Kind::preference;
  int z = 1;
  double c = 1.0;
  double lambda = 0.0;
};

PairLoss pair_loss(const PairLossSpec& spec, const LogRatioPair& pair);

// Evaluate a pair loss as a function of `policy` (reference held fixed),
// returning the gradient over the policy's logits via the chain rule.
LossEval pair_loss_on_policy(const PairLossSpec& spec, const PolicyParams& policy,
                             const PolicyParams& reference, int prompt, int preferred,
                             int rejected, double beta);

// Max relative error between analytic gradient and central differences,
// taken over every logit entry.  Relative error uses the denominator
// max(1, |analytic|, |numeric|).
double finite_difference_check(const std::function<LossEval(const PolicyParams&)>& fn,
                               const PolicyParams& at, double step = 1e-5);

}  // namespace cream
