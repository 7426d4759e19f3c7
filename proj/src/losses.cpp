#include "cream/losses.hpp"

#include <cmath>

namespace cream {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double stable_log_sigmoid(double x) { return -stable_softplus(-x); }

LogRatioPair make_log_ratio_pair(const PolicyParams& policy, const PolicyParams& reference,
                                 int prompt, int preferred, int rejected, double beta) {
  if (preferred == rejected)
    throw ValidationError("make_log_ratio_pair: preferred and rejected must differ");
  if (!(beta > 0.0)) throw ValidationError("make_log_ratio_pair: beta must be > 0");
  if (policy.space() != reference.space())
    throw ValidationError("make_log_ratio_pair: policy/reference shape mismatch");
  LogRatioPair pair;
  pair.ratio_preferred = policy.log_prob(prompt, preferred) - reference.log_prob(prompt, preferred);
  pair.ratio_rejected = policy.log_prob(prompt, rejected) - reference.log_prob(prompt, rejected);
  pair.beta = beta;
  return pair;
}

static void check_z(int z) {
  if (z != 0 && z != 1) throw ValidationError("preference label z must be 0 or 1");
}

PairLoss dpo_loss(const LogRatioPair& pair, int z) {
  check_z(z);
  const double x = pair.beta * pair.delta();
  PairLoss out;
  out.value = (z == 1) ? stable_softplus(-x) : stable_softplus(x);
  const double d_delta = pair.beta * (stable_sigmoid(x) - static_cast<double>(z));
  out.d_ratio_preferred = d_delta;
  out.d_ratio_rejected = -d_delta;
  return out;
}

PairLoss reg_loss(const LogRatioPair& pair) {
  const double x = pair.beta * pair.delta();
  PairLoss out;
  out.value = stable_softplus(-x) + stable_softplus(x);
  const double d_delta = pair.beta * (2.0 * stable_sigmoid(x) - 1.0);
  out.d_ratio_preferred = d_delta;
  out.d_ratio_rejected = -d_delta;
  return out;
}

PairLoss cream_loss(const LogRatioPair& pair, int z, SoftLabel c) {
  check_z(z);
  const double x = pair.beta * pair.delta();
  // Weight carried by the "preferred wins" term.
  const double w = (z == 1) ? c.value : 1.0 - c.value;
  PairLoss out;
  out.value = w * stable_softplus(-x) + (1.0 - w) * stable_softplus(x);
  const double d_delta = pair.beta * (stable_sigmoid(x) - w);
  out.d_ratio_preferred = d_delta;
  out.d_ratio_rejected = -d_delta;
  return out;
}

PairLoss regularized_loss(const LogRatioPair& pair, int z, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("regularized_loss: lambda must be >= 0");
  const PairLoss base = dpo_loss(pair, z);
  const PairLoss reg = reg_loss(pair);
  PairLoss out;
  out.value = base.value + lambda * reg.value;
  out.d_ratio_preferred = base.d_ratio_preferred + lambda * reg.d_ratio_preferred;
  out.d_ratio_rejected = base.d_ratio_rejected + lambda * reg.d_ratio_rejected;
  return out;
}

PairLoss kl_penalty_loss(const LogRatioPair& pair, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("kl_penalty_loss: lambda must be >= 0");
  PairLoss out = dpo_loss(pair, 1);
  if (lambda == 0.0) return out;  // exact hard-label loss, no 0 * inf hazards
  const double ew = std::exp(pair.ratio_preferred);
  const double el = std::exp(pair.ratio_rejected);
  const double gap = ew - el;
  out.value += lambda * gap * gap;
  out.d_ratio_preferred += 2.0 * lambda * gap * ew;
  out.d_ratio_rejected += -2.0 * lambda * gap * el;
  return out;
}

LossEval sft_loss(const PolicyParams& params, std::span<const SftExample> data) {
  if (data.empty()) throw ValidationError("sft_loss: data must be nonempty");
  LossEval out;
  out.grad.assign(params.flat().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  const int V = params.responses_per_prompt();
  for (const SftExample& ex : data) {
    out.value -= params.log_prob(ex.prompt, ex.target) * inv_n;
    const std::vector<double> probs = params.prob_row(ex.prompt);
    double* g = out.grad.data() + static_cast<std::size_t>(ex.prompt) * V;
    for (int v = 0; v < V; ++v) g[v] += probs[static_cast<std::size_t>(v)] * inv_n;
    g[ex.target] -= inv_n;
  }
  return out;
}

PairLoss pair_loss(const PairLossSpec& spec, const LogRatioPair& pair) {
  switch (spec.kind) {
    case PairLossSpec::Kind::preference:
      return dpo_loss(pair, spec.z);
    case PairLossSpec::Kind::regularizer:
      return reg_loss(pair);
    case PairLossSpec::Kind::soft:
      return cream_loss(pair, spec.z, spec.c);
    case PairLossSpec::Kind::regularized:
      return regularized_loss(pair, spec.z, spec.lambda);
    case PairLossSpec::Kind::kl:
      return kl_penalty_loss(pair, spec.lambda);
  }
  throw ValidationError("pair_loss: unknown kind");
}

LossEval pair_loss_on_policy(const PairLossSpec& spec, const PolicyParams& policy,
                             const PolicyParams& reference, int prompt, int preferred,
                             int rejected, double beta) {
  const LogRatioPair pair =
      make_log_ratio_pair(policy, reference, prompt, preferred, rejected, beta);
  const PairLoss pl = pair_loss(spec, pair);

  LossEval out;
  out.value = pl.value;
  out.grad.assign(policy.flat().size(), 0.0);
  const int V = policy.responses_per_prompt();
  double* g = out.grad.data() + static_cast<std::size_t>(prompt) * V;
  const std::vector<double> gw = policy.grad_log_prob(prompt, preferred);
  const std::vector<double> gl = policy.grad_log_prob(prompt, rejected);
  for (int v = 0; v < V; ++v)
    g[v] += pl.d_ratio_preferred * gw[static_cast<std::size_t>(v)] +
            pl.d_ratio_rejected * gl[static_cast<std::size_t>(v)];
  return out;
}

double finite_difference_check(const std::function<LossEval(const PolicyParams&)>& fn,
                               const PolicyParams& at, double step) {
  if (!(step > 0.0)) throw ValidationError("finite_difference_check: step must be > 0");
  const LossEval base = fn(at);
  if (base.grad.size() != at.flat().size())
    throw ValidationError("finite_difference_check: gradient size mismatch");
  PolicyParams probe = at;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < probe.flat().size(); ++i) {
    const double saved = probe.flat()[i];
    probe.flat()[i] = saved + step;
    const double up = fn(probe).value;
    probe.flat()[i] = saved - step;
    const double down = fn(probe).value;
    probe.flat()[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double an = base.grad[i];
    const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace cream
