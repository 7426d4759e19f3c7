#include "cream/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "cream/artifacts.hpp"
#include "cream/consistency.hpp"
#include "cream/losses.hpp"
#include "cream/pairs.hpp"
#include "cream/rng.hpp"

namespace cream {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

PolicyParams random_policy(TaskSpace space, Rng& rng, double scale = 1.5) {
  PolicyParams p(space);
  for (double& x : p.flat()) x = scale * rng.normal();
  return p;
}

LogRatioPair random_ratio_pair(Rng& rng) {
  LogRatioPair pair;
  pair.ratio_preferred = 8.0 * (rng.uniform() - 0.5);
  pair.ratio_rejected = 8.0 * (rng.uniform() - 0.5);
  pair.beta = 0.05 + 1.95 * rng.uniform();
  return pair;
}

CheckResult result(std::string name, double max_err, double tolerance, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.max_err = max_err;
  r.tolerance = tolerance;
  r.passed = max_err <= tolerance;
  r.detail = std::move(detail);
  return r;
}

struct PairInstance {
  PolicyParams policy;
  PolicyParams reference;
  int prompt = 0;
  int preferred = 0;
  int rejected = 0;
  double beta = 0.1;
};

PairInstance random_instance(Rng& rng) {
  const TaskSpace space{3, 5};
  PairInstance inst;
  inst.policy = random_policy(space, rng);
  inst.reference = random_policy(space, rng);
  inst.prompt = static_cast<int>(rng.below(3));
  inst.preferred = static_cast<int>(rng.below(5));
  do {
    inst.rejected = static_cast<int>(rng.below(5));
  } while (inst.rejected == inst.preferred);
  inst.beta = 0.05 + 1.95 * rng.uniform();
  return inst;
}

}  // namespace

// ---------------------------------------------------------------- losses --

std::vector<CheckResult> verify_losses(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(options.seed, {0x105e5}));

  // Analytic gradients against central differences, one sweep per family.
  struct Family {
    const char* name;
    PairLossSpec spec;
  };
  const auto families = [&rng]() {
    std::vector<Family> fams;
    fams.push_back({"grad-preference-z1", {PairLossSpec::Kind::preference, 1, 1.0, 0.0}});
    fams.push_back({"grad-preference-z0", {PairLossSpec::Kind::preference, 0, 1.0, 0.0}});
    fams.push_back({"grad-regularizer", {PairLossSpec::Kind::regularizer, 1, 1.0, 0.0}});
    fams.push_back({"grad-soft-label", {PairLossSpec::Kind::soft, 1, 0.5, 0.0}});
    fams.push_back({"grad-regularized", {PairLossSpec::Kind::regularized, 1, 1.0, 1.0}});
    fams.push_back({"grad-ratio-penalty", {PairLossSpec::Kind::kl, 1, 1.0, 0.5}});
    return fams;
  }();
  for (const Family& family : families) {
    double max_err = 0.0;
    for (int i = 0; i < 60; ++i) {
      const PairInstance inst = random_instance(rng);
      PairLossSpec spec = family.spec;
      if (spec.kind == PairLossSpec::Kind::soft) spec.c = rng.uniform();
      if (spec.kind == PairLossSpec::Kind::regularized) spec.lambda = (i % 10 == 0) ? 0.0 : 3.0 * rng.uniform();
      if (spec.kind == PairLossSpec::Kind::kl) spec.lambda = (i % 10 == 0) ? 0.0 : 1.5 * rng.uniform();
      if (spec.kind == PairLossSpec::Kind::preference || spec.kind == PairLossSpec::Kind::soft)
        spec.z = family.spec.z;
      const auto fn = [&](const PolicyParams& p) {
        return pair_loss_on_policy(spec, p, inst.reference, inst.prompt, inst.preferred,
                                   inst.rejected, inst.beta);
      };
      max_err = std::max(max_err, finite_difference_check(fn, inst.policy));
    }
    out.push_back(result(family.name, max_err, 1e-6, "60 random instances"));
  }
  {
    double max_err = 0.0;
    for (int i = 0; i < 60; ++i) {
      const TaskSpace space{3, 5};
      const PolicyParams params = random_policy(space, rng);
      std::vector<SftExample> data;
      const int n = 1 + static_cast<int>(rng.below(5));
      for (int k = 0; k < n; ++k)
        data.push_back({static_cast<int>(rng.below(3)), static_cast<int>(rng.below(5))});
      const auto fn = [&](const PolicyParams& p) {
        return sft_loss(p, std::span<const SftExample>(data));
      };
      max_err = std::max(max_err, finite_difference_check(fn, params));
    }
    out.push_back(result("grad-supervised", max_err, 1e-6, "60 random instances"));
  }

  // Gradient of the soft-label loss vanishes exactly where the computed
  // sigmoid of beta*delta equals the label, and has the sign of their gap
  // elsewhere.  With beta = 1 and ratio_rejected = 0 the preferred ratio IS
  // the sigmoid argument, so an ulp walk scans representable arguments.
  {
    const double beta = 1.0;
    double max_err = 0.0;
    std::string detail;
    for (double c : {0.3, 0.5, 0.7}) {
      const double x0 = std::log(c / (1.0 - c));
      double exact = std::numeric_limits<double>::quiet_NaN();
      double down = x0;
      double up = std::nextafter(x0, std::numeric_limits<double>::max());
      for (int k = 0; k < 4000 && std::isnan(exact); ++k) {
        if (stable_sigmoid(down) == c) exact = down;
        else if (stable_sigmoid(up) == c) exact = up;
        down = std::nextafter(down, -std::numeric_limits<double>::max());
        up = std::nextafter(up, std::numeric_limits<double>::max());
      }
      if (std::isnan(exact)) {
        detail += "no representable preimage near c=" + format_double(c) + "; ";
      } else {
        const LogRatioPair pair{exact, 0.0, beta};
        const PairLoss at = cream_loss(pair, 1, c);
        max_err = std::max(max_err, std::abs(at.d_ratio_preferred));
      }
      for (int g = -24; g <= 24; ++g) {
        const double x = x0 + 0.5 * static_cast<double>(g);
        const LogRatioPair off{x, 0.0, beta};
        const PairLoss pl = cream_loss(off, 1, c);
        const double gap = stable_sigmoid(x) - c;
        if (gap == 0.0) continue;
        if (gap > 0.0 ? pl.d_ratio_preferred <= 0.0 : pl.d_ratio_preferred >= 0.0)
          max_err = std::max(max_err, 1.0);
      }
    }
    out.push_back(result("soft-label-stationarity", max_err, 0.0, detail));
  }

  // Soft-label loss as a two-class cross-entropy on sigma(beta * delta).
  {
    double max_err = 0.0;
    for (int i = 0; i < 200; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const double c = rng.uniform();
      const double x = pair.beta * pair.delta();
      const double oracle = -(c * stable_log_sigmoid(x) + (1.0 - c) * stable_log_sigmoid(-x));
      max_err = std::max(max_err, rel_err(cream_loss(pair, 1, c).value, oracle));
    }
    out.push_back(result("cross-entropy-form", max_err, 1e-14));
  }

  // c = 1 and c = 0 collapse the soft loss onto the two hard-label losses.
  {
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      for (int z : {0, 1}) {
        const PairLoss hard = dpo_loss(pair, z);
        const PairLoss flip = dpo_loss(pair, 1 - z);
        const PairLoss c1 = cream_loss(pair, z, 1.0);
        const PairLoss c0 = cream_loss(pair, z, 0.0);
        if (!same_bits(hard.value, c1.value) ||
            !same_bits(hard.d_ratio_preferred, c1.d_ratio_preferred) ||
            !same_bits(flip.value, c0.value) ||
            !same_bits(flip.d_ratio_preferred, c0.d_ratio_preferred))
          ++mismatches;
      }
    }
    out.push_back(result("hard-label-reduction", mismatches, 0.0, "bitwise, 100 instances"));
  }

  // Swapping the pair and the label leaves the loss value bit-identical.
  {
    int value_mismatches = 0;
    double grad_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const LogRatioPair swapped{pair.ratio_rejected, pair.ratio_preferred, pair.beta};
      const PairLoss a = dpo_loss(pair, 0);
      const PairLoss b = dpo_loss(swapped, 1);
      if (!same_bits(a.value, b.value)) ++value_mismatches;
      grad_err = std::max(grad_err, rel_err(a.d_ratio_preferred, b.d_ratio_rejected));
    }
    out.push_back(result("label-swap-symmetry", value_mismatches + grad_err, 1e-14));
  }

  // reg == dpo(z=1) + dpo(z=0), value bitwise; gradients agree analytically.
  {
    int value_mismatches = 0;
    double grad_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const PairLoss r = reg_loss(pair);
      const PairLoss d1 = dpo_loss(pair, 1);
      const PairLoss d0 = dpo_loss(pair, 0);
      if (!same_bits(r.value, d1.value + d0.value)) ++value_mismatches;
      grad_err = std::max(
          grad_err, rel_err(r.d_ratio_preferred, d1.d_ratio_preferred + d0.d_ratio_preferred));
    }
    out.push_back(result("regularizer-decomposition", value_mismatches + grad_err, 1e-14));
  }

  // reg is symmetric in the pair order (value bitwise).
  {
    int mismatches = 0;
    double grad_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const LogRatioPair swapped{pair.ratio_rejected, pair.ratio_preferred, pair.beta};
      const PairLoss a = reg_loss(pair);
      const PairLoss b = reg_loss(swapped);
      if (!same_bits(a.value, b.value)) ++mismatches;
      grad_err = std::max(grad_err, rel_err(a.d_ratio_preferred, -b.d_ratio_preferred));
    }
    out.push_back(result("regularizer-symmetry", mismatches + grad_err, 1e-14));
  }

  // Per-row logit shifts cancel in every log-ratio loss.
  {
    double max_err = 0.0;
    for (int i = 0; i < 50; ++i) {
      const PairInstance inst = random_instance(rng);
      PolicyParams shifted_policy = inst.policy;
      PolicyParams shifted_ref = inst.reference;
      for (int p = 0; p < 3; ++p) {
        const double s = 6.0 * (rng.uniform() - 0.5);
        const double t = 6.0 * (rng.uniform() - 0.5);
        for (double& x : shifted_policy.row(p)) x += s;
        for (double& x : shifted_ref.row(p)) x += t;
      }
      for (PairLossSpec::Kind kind :
           {PairLossSpec::Kind::preference, PairLossSpec::Kind::regularizer,
            PairLossSpec::Kind::soft, PairLossSpec::Kind::regularized, PairLossSpec::Kind::kl}) {
        PairLossSpec spec;
        spec.kind = kind;
        spec.z = 1;
        spec.c = 0.6;
        spec.lambda = 0.7;
        const double a = pair_loss_on_policy(spec, inst.policy, inst.reference, inst.prompt,
                                             inst.preferred, inst.rejected, inst.beta)
                             .value;
        const double b = pair_loss_on_policy(spec, shifted_policy, shifted_ref, inst.prompt,
                                             inst.preferred, inst.rejected, inst.beta)
                             .value;
        max_err = std::max(max_err, rel_err(a, b));
      }
    }
    out.push_back(result("shift-invariance", max_err, 1e-10));
  }

  // Zero penalty weight reproduces the hard-label loss bit-for-bit.
  {
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const PairLoss a = kl_penalty_loss(pair, 0.0);
      const PairLoss b = dpo_loss(pair, 1);
      if (!same_bits(a.value, b.value) ||
          !same_bits(a.d_ratio_preferred, b.d_ratio_preferred) ||
          !same_bits(a.d_ratio_rejected, b.d_ratio_rejected))
        ++mismatches;
    }
    out.push_back(result("penalty-zero-weight", mismatches, 0.0, "bitwise, 100 instances"));
  }

  // Hand value: ratios (log 2, 0), lambda = 1/2 adds exactly 1/2.
  {
    const LogRatioPair pair{std::log(2.0), 0.0, 0.1};
    const double expected = dpo_loss(pair, 1).value + 0.5;
    const double got = kl_penalty_loss(pair, 0.5).value;
    out.push_back(result("penalty-hand-value", std::abs(got - expected), 1e-13));
  }

  return out;
}

// ---------------------------------------------------------------- lemmas --

std::vector<CheckResult> verify_lemmas(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(options.seed, {0x1e44a5}));

  // Independent oracles assembled from different primitives.
  const auto oracle_log_sigmoid = [](double v) {
    return v < 0.0 ? v - std::log1p(std::exp(v)) : -std::log1p(std::exp(-v));
  };
  const auto oracle_sigmoid = [](double v) { return 0.5 * (1.0 + std::tanh(0.5 * v)); };
  const double ln2 = std::log(2.0);

  // reg(pair) == 2 * KL(uniform || P_theta) + 2 log 2, value and gradient.
  {
    double value_err = 0.0, grad_err = 0.0;
    for (int i = 0; i < 200; ++i) {
      const LogRatioPair pair = random_ratio_pair(rng);
      const double x = pair.beta * pair.delta();
      const double kl_u = -ln2 - 0.5 * (oracle_log_sigmoid(x) + oracle_log_sigmoid(-x));
      const double rhs = 2.0 * kl_u + 2.0 * ln2;
      const PairLoss r = reg_loss(pair);
      value_err = std::max(value_err, std::abs(r.value - rhs));
      const double oracle_grad = pair.beta * (oracle_sigmoid(x) - oracle_sigmoid(-x));
      grad_err = std::max(grad_err, rel_err(r.d_ratio_preferred, oracle_grad));
    }
    out.push_back(result("shifted-divergence-identity", value_err, 1e-12,
                         "grad err " + format_double(grad_err)));
    out.push_back(result("shifted-divergence-gradient", grad_err, 1e-10));
  }

  // Same identity holds in expectation over pairs drawn from the policy.
  {
    double max_err = 0.0;
    for (int i = 0; i < 30; ++i) {
      const TaskSpace space{1, 5};
      const PolicyParams policy = random_policy(space, rng);
      const PolicyParams reference = random_policy(space, rng);
      const double beta = 0.05 + 1.95 * rng.uniform();
      const std::vector<double> pi = policy.prob_row(0);
      double e_reg = 0.0, e_kl = 0.0;
      for (int y = 0; y < 5; ++y) {
        for (int yp = 0; yp < 5; ++yp) {
          if (y == yp) continue;
          const LogRatioPair pair =
              make_log_ratio_pair(policy, reference, 0, y, yp, beta);
          const double w = pi[static_cast<std::size_t>(y)] * pi[static_cast<std::size_t>(yp)];
          const double x = pair.beta * pair.delta();
          e_reg += w * reg_loss(pair).value;
          e_kl += w * (-ln2 - 0.5 * (oracle_log_sigmoid(x) + oracle_log_sigmoid(-x)));
        }
      }
      double pair_mass = 0.0;
      for (int y = 0; y < 5; ++y)
        for (int yp = 0; yp < 5; ++yp)
          if (y != yp) pair_mass += pi[static_cast<std::size_t>(y)] * pi[static_cast<std::size_t>(yp)];
      max_err = std::max(max_err, std::abs(e_reg - (2.0 * e_kl + 2.0 * ln2 * pair_mass)));
    }
    out.push_back(result("shifted-divergence-expectation", max_err, 1e-12));
  }

  // Expected ranking agreement between two checkpoints equals 1 - 2*lambda,
  // lambda from exhaustive enumeration, expectation from Monte Carlo.
  {
    double worst_z = 0.0;
    std::string detail;
    const int configs[][2] = {{4, 1}, {4, 2}, {8, 3}, {8, 4}, {6, 5}};
    for (const auto& cfg : configs) {
      const int V = cfg[0];
      Rng crng(derive_seed(options.seed, {0x3a, static_cast<std::uint64_t>(cfg[1])}));
      const TaskSpace space{1, V};
      const PolicyParams current = random_policy(space, crng, 1.2);
      const PolicyParams previous = random_policy(space, crng, 1.2);
      const PolicyParams reference = random_policy(space, crng, 1.2);
      const double lambda = estimate_lambda(current, previous, reference, 0);
      const double expected = 1.0 - 2.0 * lambda;

      const int batches = 2000;
      std::vector<double> taus;
      taus.reserve(batches);
      Rng mc(derive_seed(options.seed, {0x3b, static_cast<std::uint64_t>(cfg[1])}));
      for (int b = 0; b < batches; ++b) {
        const CandidateSet cs = sample_candidates(current, 0, 5, 1.0, mc);
        const RankedList lj = rank(intrinsic_reward(cs, current, reference));
        const RankedList lk = rank(intrinsic_reward(cs, previous, reference));
        taus.push_back(kendall_tau(lj.ranks, lk.ranks));
      }
      const Summary s = summarize(taus);
      const double se = std::max(s.stddev / std::sqrt(static_cast<double>(batches)), 1e-12);
      const double z = std::abs(s.mean - expected) / se;
      worst_z = std::max(worst_z, z);
      detail += "V=" + std::to_string(V) + " z=" + format_double(z) + "; ";
    }
    out.push_back(result("expected-rank-agreement", worst_z, 3.0, detail));
  }

  // The bridge constants behind the soft-label equivalence.
  {
    double max_err = 0.0;
    for (double lambda : {0.0, 0.25, 1.0, 4.0, 10.0}) {
      const double c = (1.0 + lambda) / (1.0 + 2.0 * lambda);
      max_err = std::max(max_err, rel_err((1.0 + 2.0 * lambda) * c, 1.0 + lambda));
      max_err = std::max(max_err, rel_err((1.0 + 2.0 * lambda) * (1.0 - c), lambda));
    }
    out.push_back(result("soft-label-bridge-constants", max_err, 1e-15));
  }

  return out;
}

// -------------------------------------------------------------- theorems --

std::vector<CheckResult> verify_theorems(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(options.seed, {0x7e0}));

  // dpo(z) + lambda * reg == (1 + 2*lambda) * soft(z, (1+lambda)/(1+2*lambda)),
  // as functions of the policy: values and full logit gradients.
  {
    const double lambdas[] = {0.0, 0.25, 1.0, 4.0};
    double max_err = 0.0;
    int instances = 0;
    for (int i = 0; i < 30; ++i) {
      const PairInstance inst = random_instance(rng);
      const int z = static_cast<int>(rng.below(2));
      for (double lambda : lambdas) {
        ++instances;
        PairLossSpec reg_spec;
        reg_spec.kind = PairLossSpec::Kind::regularized;
        reg_spec.z = z;
        reg_spec.lambda = lambda;
        const LossEval lhs = pair_loss_on_policy(reg_spec, inst.policy, inst.reference,
                                                 inst.prompt, inst.preferred, inst.rejected,
                                                 inst.beta);
        double c = (1.0 + lambda) / (1.0 + 2.0 * lambda);
        if (options.corrupt_soft_label_bridge) c = std::min(1.0, c + 0.05);
        PairLossSpec soft_spec;
        soft_spec.kind = PairLossSpec::Kind::soft;
        soft_spec.z = z;
        soft_spec.c = c;
        const LossEval rhs = pair_loss_on_policy(soft_spec, inst.policy, inst.reference,
                                                 inst.prompt, inst.preferred, inst.rejected,
                                                 inst.beta);
        const double scale = 1.0 + 2.0 * lambda;
        max_err = std::max(max_err, rel_err(lhs.value, scale * rhs.value));
        for (std::size_t g = 0; g < lhs.grad.size(); ++g)
          max_err = std::max(max_err, rel_err(lhs.grad[g], scale * rhs.grad[g]));
      }
    }
    out.push_back(result("soft-label-equivalence", max_err, 1e-10,
                         std::to_string(instances) + " instances (value + gradient)"));
  }

  // Alternating exact relabeling and guarded descent never increases the
  // objective; the relabel half-step is exact in floating point.
  {
    double max_increase = 0.0;
    int relabel_violations = 0;
    double final_loss = 0.0;
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
      TaskGenOptions topt;
      topt.margin = 0.5;
      topt.sft_fraction = 0.3;
      const SyntheticTask task = generate_task(10, 6, seed, topt);
      TrainConfig config;
      config.method = Method::srlm;
      config.n_candidates = 4;
      config.temperature = 1.0;
      config.beta = 0.1;
      config.learning_rate = 0.5;
      config.seed = seed + 1;
      config.init_coupling = 0.3;
      config.init_noise = 0.8;
      const TwoStepTrace trace = two_step_harness(task, config, 20, 25);
      const std::vector<double> seq = trace.sequence();
      for (std::size_t i = 1; i < seq.size(); ++i)
        max_increase = std::max(max_increase, seq[i] - seq[i - 1]);
      for (const TwoStepTrace::Step& step : trace.steps)
        if (step.loss_after_relabel > step.loss_after_learn) ++relabel_violations;
      final_loss = seq.back();
    }
    out.push_back(result("alternating-minimization", max_increase, 1e-6,
                         "3 tasks x 20 outer steps, final loss " + format_double(final_loss)));
    out.push_back(result("alternating-relabel-exact", relabel_violations, 0.0,
                         "relabel half-steps must never increase the objective"));
  }

  return out;
}

// ------------------------------------------------------------ rank-stats --

namespace {

double oracle_kendall(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = a.size();
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool a_less = a[i] < a[j], a_more = a[i] > a[j];
      const bool b_less = b[i] < b[j], b_more = b[i] > b[j];
      if ((a_less && b_less) || (a_more && b_more)) ++concordant;
      else if ((a_less && b_more) || (a_more && b_less)) ++discordant;
    }
  }
  return static_cast<double>(concordant - discordant) /
         (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double oracle_spearman(std::span<const int> a, std::span<const int> b) {
  long long d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long long d = static_cast<long long>(a[i]) - b[i];
    d2 += d * d;
  }
  const double n = static_cast<double>(a.size());
  return 1.0 - 6.0 * static_cast<double>(d2) / (n * (n * n - 1.0));
}

double pearson_on_ranks(std::span<const int> a, std::span<const int> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

int oracle_top_order(std::span<const int> a, std::span<const int> b) {
  const auto argbest = [](std::span<const int> r) {
    return static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
  };
  const auto argworst = [](std::span<const int> r) {
    return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  };
  return (argbest(a) == argbest(b) && argworst(a) == argworst(b)) ? 1 : 0;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i + 1;
  for (int i = n - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
  }
  return perm;
}

}  // namespace

std::vector<CheckResult> verify_rank_stats(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(options.seed, {0x4a4c}));

  // 1000 random permutation pairs against brute-force oracles, exactly.
  {
    int kendall_mismatch = 0, spearman_mismatch = 0, toporder_mismatch = 0;
    double pearson_gap = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const int n = 2 + static_cast<int>(rng.below(11));
      const std::vector<int> a = random_permutation(n, rng);
      const std::vector<int> b = random_permutation(n, rng);
      if (!same_bits(kendall_tau(a, b), oracle_kendall(a, b))) ++kendall_mismatch;
      if (!same_bits(spearman_rho(a, b), oracle_spearman(a, b))) ++spearman_mismatch;
      if (top_order(a, b) != oracle_top_order(a, b)) ++toporder_mismatch;
      pearson_gap = std::max(pearson_gap, std::abs(spearman_rho(a, b) - pearson_on_ranks(a, b)));
    }
    out.push_back(result("kendall-brute-force", kendall_mismatch, 0.0, "1000 permutation pairs"));
    out.push_back(
        result("spearman-brute-force", spearman_mismatch, 0.0, "1000 permutation pairs"));
    out.push_back(
        result("toporder-brute-force", toporder_mismatch, 0.0, "1000 permutation pairs"));
    out.push_back(result("spearman-vs-pearson", pearson_gap, 1e-12));
  }

  // Hand-checked examples.
  {
    const std::vector<int> j1{1, 2, 3, 4, 5}, k1{2, 1, 3, 4, 5};
    const std::vector<int> j2{1, 2, 3}, k2{2, 1, 3};
    const std::vector<int> j3{1, 3, 2}, k3{1, 2, 3};
    double err = 0.0;
    err = std::max(err, std::abs(kendall_tau(j1, k1) - 0.8));
    err = std::max(err, std::abs(spearman_rho(j2, k2) - 0.5));
    err = std::max(err, std::abs(static_cast<double>(top_order(j3, k3)) - 0.0));
    err = std::max(err, std::abs(static_cast<double>(top_order(j1, j1)) - 1.0));
    out.push_back(result("rank-stat-hand-examples", err, 0.0));
  }

  // Consistency rate on hand values.
  {
    const std::vector<double> taus{1.0, 0.0, -1.0};
    double err = std::abs(consistency_rate(taus) - 0.5);
    const std::vector<double> ones{1.0, 1.0, 1.0, 1.0};
    err = std::max(err, std::abs(consistency_rate(ones) - 1.0));
    out.push_back(result("consistency-rate-values", err, 0.0));
  }

  // Ranking determinism: duplicates resolve toward the lower index.
  {
    RewardVector rv;
    rv.prompt = 0;
    rv.scores = {5.0, 7.0, 7.0, 2.0};
    const RankedList rl = rank(rv);
    const std::vector<int> expected{3, 1, 2, 4};
    double err = (rl.ranks == expected) ? 0.0 : 1.0;
    RewardVector affine = rv;
    for (double& s : affine.scores) s = 2.0 * s + 1.0;
    if (rank(affine).ranks != rl.ranks) err = 1.0;
    out.push_back(result("ranking-tie-break", err, 0.0));
  }

  // Disagreement functional edge cases: identical checkpoints give 0;
  // an exactly reversed checkpoint gives 1 - sum pi^2.
  {
    Rng crng(derive_seed(options.seed, {0x88}));
    const TaskSpace space{1, 4};
    const PolicyParams current = random_policy(space, crng);
    const PolicyParams reference = random_policy(space, crng);
    double err = std::abs(estimate_lambda(current, current, reference, 0));

    PolicyParams reversed(space);
    for (int v = 0; v < 4; ++v)
      reversed.logit(0, v) = 2.0 * reference.logit(0, v) - current.logit(0, v);
    const double lambda = estimate_lambda(current, reversed, reference, 0);
    const std::vector<double> pi = current.prob_row(0);
    double tie_mass = 0.0;
    for (double p : pi) tie_mass += p * p;
    err = std::max(err, std::abs(lambda - (1.0 - tie_mass)));
    out.push_back(result("disagreement-functional-edges", err, 1e-12));
  }

  return out;
}

std::vector<std::string> verify_suite_names() {
  return {"losses", "lemmas", "theorems", "rank-stats", "all"};
}

std::vector<CheckResult> verify_suite(const std::string& suite, const VerifyOptions& options) {
  if (suite == "losses") return verify_losses(options);
  if (suite == "lemmas") return verify_lemmas(options);
  if (suite == "theorems") return verify_theorems(options);
  if (suite == "rank-stats") return verify_rank_stats(options);
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (const std::string& name : {"losses", "lemmas", "theorems", "rank-stats"}) {
      std::vector<CheckResult> part = verify_suite(name, options);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ValidationError("unknown verify suite '" + suite + "' (expected losses, lemmas, "
                        "theorems, rank-stats, or all)");
}

// ---------------------------------------------- experiment-level checks --

namespace {

TaskGenSpec directional_task_spec(std::uint64_t seed) {
  TaskGenSpec spec;
  spec.num_prompts = 200;
  spec.responses_per_prompt = 8;
  spec.seed = seed;
  spec.options.distribution = UtilityDistribution::gap_controlled;
  spec.options.margin = 0.8;
  spec.options.ambiguous_fraction = 0.30;
  spec.options.ambiguous_margin = 0.02;
  spec.options.sft_fraction = 1.0;
  spec.options.noise_level = 0.0;
  return spec;
}

TrainConfig directional_train_config(std::uint64_t seed) {
  TrainConfig config;
  config.method = Method::srlm;
  config.iterations = 3;
  config.n_candidates = 5;
  config.temperature = 0.8;
  config.beta = 0.1;
  // Plain gradient keeps the update magnitude-sensitive, which is the channel
  // the soft label acts through; the warm start stays on adaptive moments.
  config.optimizer = OptimizerKind::plain_gradient;
  config.learning_rate = 20.0;
  config.sft_learning_rate = 0.1;
  config.sft_epochs = 4;
  config.seed = seed;
  // Near-uniform start: the t=1 likelihood ranking is then uninformative, so
  // the first consistency estimate sits at 1/2 and rises once real
  // checkpoint-to-checkpoint agreement enters at t=2.
  config.init_coupling = 0.0;
  config.init_noise = 0.1;
  return config;
}

std::vector<double> consistency_per_iteration(std::span<const IterationSnapshot> snaps) {
  std::vector<double> rates;
  for (const IterationSnapshot& snap : snaps)
    if (snap.consistency) rates.push_back(snap.consistency->rate);
  return rates;
}

}  // namespace

DirectionalReport run_directional_experiment() {
  DirectionalReport report;
  constexpr double kTargetFlipRate = 0.30;
  const std::uint64_t task_seeds[] = {1011, 1122, 1233, 1344, 1455};
  const std::uint64_t train_seeds[] = {2001, 2038, 2075, 2112, 2149};

  for (std::size_t i = 0; i < 5; ++i) {
    DirectionalSeedRun run;
    run.task_seed = task_seeds[i];
    run.train_seed = train_seeds[i];

    const TaskGenSpec spec = directional_task_spec(task_seeds[i]);
    const SyntheticTask clean_task = spec.build();
    TrainConfig config = directional_train_config(train_seeds[i]);

    // Calibrate the reward-noise scale at the post-SFT checkpoint.
    Trainer probe(clean_task, config);
    probe.sft_stage();
    const NoiseCalibration calib =
        calibrate_noise_level(clean_task, probe.current(), probe.reference(), config,
                              kTargetFlipRate, derive_seed(train_seeds[i], {0xCA11}));
    run.sigma = calib.sigma;
    run.calibration_flip_rate = calib.flip_rate;

    SyntheticTask task = clean_task;
    task.noise_level = calib.sigma;

    TrainConfig cream_config = config;
    cream_config.method = Method::cream;
    const std::vector<IterationSnapshot> cream_snaps = run_experiment(task, cream_config);
    TrainConfig srlm_config = config;
    srlm_config.method = Method::srlm;
    const std::vector<IterationSnapshot> srlm_snaps = run_experiment(task, srlm_config);

    if (report.labels.empty())
      for (const IterationSnapshot& snap : cream_snaps) report.labels.push_back(snap.label);
    for (const IterationSnapshot& snap : cream_snaps)
      run.cream_accuracy.push_back(snap.proxy_accuracy);
    for (const IterationSnapshot& snap : srlm_snaps)
      run.srlm_accuracy.push_back(snap.proxy_accuracy);
    run.cream_consistency = consistency_per_iteration(cream_snaps);
    run.srlm_consistency = consistency_per_iteration(srlm_snaps);
    report.runs.push_back(std::move(run));
  }

  const std::size_t stages = report.labels.size();
  std::vector<double> cream_mean(stages, 0.0), srlm_mean(stages, 0.0);
  for (const DirectionalSeedRun& run : report.runs) {
    for (std::size_t s = 0; s < stages; ++s) {
      cream_mean[s] += run.cream_accuracy[s] / static_cast<double>(report.runs.size());
      srlm_mean[s] += run.srlm_accuracy[s] / static_cast<double>(report.runs.size());
    }
  }

  // Pinned comparison stage: label "M3".
  std::size_t m3 = 0, m1 = 0;
  for (std::size_t s = 0; s < stages; ++s) {
    if (report.labels[s] == "M3") m3 = s;
    if (report.labels[s] == "M1") m1 = s;
  }
  report.mean_cream_m1 = cream_mean[m1];
  report.mean_cream_m3 = cream_mean[m3];
  report.mean_srlm_m3 = srlm_mean[m3];
  report.cream_beats_srlm = cream_mean[m3] > srlm_mean[m3];
  report.cream_no_regress = cream_mean[m3] >= cream_mean[m1];
  report.srlm_declines = false;
  for (std::size_t s = m1; s + 1 < stages; ++s)
    if (srlm_mean[s + 1] < srlm_mean[s]) report.srlm_declines = true;

  // Dataset consistency of the soft-label method must rise from the first
  // preference iteration to the second.
  double c1 = 0.0, c2 = 0.0;
  for (const DirectionalSeedRun& run : report.runs) {
    c1 += run.cream_consistency.at(0) / static_cast<double>(report.runs.size());
    c2 += run.cream_consistency.at(1) / static_cast<double>(report.runs.size());
  }
  report.consistency_rises = c2 > c1;

  std::ostringstream detail;
  detail << "sigma=[";
  for (std::size_t i = 0; i < report.runs.size(); ++i)
    detail << (i ? " " : "") << format_double(report.runs[i].sigma);
  detail << "] flip=[";
  for (std::size_t i = 0; i < report.runs.size(); ++i)
    detail << (i ? " " : "") << format_double(report.runs[i].calibration_flip_rate);
  detail << "] cream_acc=[";
  for (std::size_t s = 0; s < stages; ++s) detail << (s ? " " : "") << format_double(cream_mean[s]);
  detail << "] srlm_acc=[";
  for (std::size_t s = 0; s < stages; ++s) detail << (s ? " " : "") << format_double(srlm_mean[s]);
  detail << "] cream_c=[" << format_double(c1) << " " << format_double(c2) << "]";
  report.detail = detail.str();
  return report;
}

namespace {

// Replace the method column so byte comparison ignores the method label.
std::string mask_method_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t first = line.find(',');
    const std::size_t second = line.find(',', first + 1);
    if (first != std::string::npos && second != std::string::npos)
      out << line.substr(0, first + 1) << '*' << line.substr(second) << '\n';
    else
      out << line << '\n';
  }
  return out.str();
}

}  // namespace

std::vector<CheckResult> run_equivalence_checks() {
  std::vector<CheckResult> out;

  TaskGenSpec tspec;
  tspec.num_prompts = 24;
  tspec.responses_per_prompt = 6;
  tspec.seed = 77;
  tspec.options.margin = 0.6;
  tspec.options.ambiguous_fraction = 0.25;
  tspec.options.ambiguous_margin = 0.05;
  tspec.options.sft_fraction = 1.0;
  tspec.options.noise_level = 0.5;
  const SyntheticTask task = tspec.build();

  TrainConfig base;
  base.method = Method::srlm;
  base.iterations = 2;
  base.n_candidates = 4;
  base.temperature = 0.8;
  base.beta = 0.1;
  base.learning_rate = 0.1;
  base.sft_epochs = 3;
  base.seed = 909;
  base.init_coupling = 0.5;
  base.init_noise = 0.5;

  const auto run_with = [&](Method method, double fixed_c, double kl_lambda) {
    TrainConfig config = base;
    config.method = method;
    config.fixed_consistency = fixed_c;
    config.kl_lambda = kl_lambda;
    ExperimentConfig ec;
    ec.task = tspec;
    ec.train = config;
    NamedRun named;
    named.name = method_name(method);
    named.config = ec;
    named.snapshots = run_experiment(task, config);
    return named;
  };

  const NamedRun srlm = run_with(Method::srlm, 1.0, 0.0);
  const NamedRun forced = run_with(Method::cream_no_rc, 1.0, 0.0);
  const NamedRun verbatim = run_with(Method::cream_no_rc, 0.37, 0.0);
  const NamedRun kl_zero = run_with(Method::srlm_kl, 1.0, 0.0);

  {
    const std::string a = mask_method_column(metrics_csv(srlm.config, srlm.snapshots));
    const std::string b = mask_method_column(metrics_csv(forced.config, forced.snapshots));
    double err = (a == b) ? 0.0 : 1.0;
    // Parameters must match bit-for-bit as well.
    if (srlm.snapshots.back().params != forced.snapshots.back().params) err += 1.0;
    out.push_back(result("hard-label-equals-forced-soft-label", err, 0.0,
                         "metrics and final parameters, bitwise"));
  }
  {
    double err = 0.0;
    int records = 0;
    for (const IterationSnapshot& snap : verbatim.snapshots)
      for (const PreferenceRecord& rec : snap.records) {
        ++records;
        if (!same_bits(rec.soft_weight, 0.37)) err += 1.0;
      }
    if (records == 0) err += 1.0;
    out.push_back(result("fixed-soft-label-verbatim", err, 0.0,
                         std::to_string(records) + " records, soft label 0.37"));
  }
  {
    const std::string a = mask_method_column(metrics_csv(srlm.config, srlm.snapshots));
    const std::string b = mask_method_column(metrics_csv(kl_zero.config, kl_zero.snapshots));
    double err = (a == b) ? 0.0 : 1.0;
    if (srlm.snapshots.back().params != kl_zero.snapshots.back().params) err += 1.0;
    out.push_back(result("zero-penalty-equals-hard-label", err, 0.0,
                         "metrics and final parameters, bitwise"));
  }
  return out;
}

}  // namespace cream
