#include "cream/policy.hpp"

#include <algorithm>
#include <cmath>

namespace cream {

void TaskSpace::validate() const {
  if (num_prompts < 1) throw ValidationError("TaskSpace: num_prompts must be >= 1");
  if (responses_per_prompt < 2)
    throw ValidationError("TaskSpace: responses_per_prompt must be >= 2");
}

PolicyParams::PolicyParams(TaskSpace space, double init) : space_(space) {
  space_.validate();
  logits_.assign(static_cast<std::size_t>(space_.num_prompts) * space_.responses_per_prompt,
                 init);
}

void PolicyParams::check_prompt(int prompt) const {
  if (prompt < 0 || prompt >= space_.num_prompts)
    throw ValidationError("PolicyParams: prompt index " + std::to_string(prompt) +
                          " outside [0, " + std::to_string(space_.num_prompts) + ")");
}

void PolicyParams::check_response(int response) const {
  if (response < 0 || response >= space_.responses_per_prompt)
    throw ValidationError("PolicyParams: response index " + std::to_string(response) +
                          " outside [0, " + std::to_string(space_.responses_per_prompt) + ")");
}

double PolicyParams::logit(int prompt, int response) const {
  check_prompt(prompt);
  check_response(response);
  return logits_[static_cast<std::size_t>(prompt) * space_.responses_per_prompt + response];
}

double& PolicyParams::logit(int prompt, int response) {
  check_prompt(prompt);
  check_response(response);
  return logits_[static_cast<std::size_t>(prompt) * space_.responses_per_prompt + response];
}

std::span<const double> PolicyParams::row(int prompt) const {
  check_prompt(prompt);
  return {logits_.data() + static_cast<std::size_t>(prompt) * space_.responses_per_prompt,
          static_cast<std::size_t>(space_.responses_per_prompt)};
}

std::span<double> PolicyParams::row(int prompt) {
  check_prompt(prompt);
  return {logits_.data() + static_cast<std::size_t>(prompt) * space_.responses_per_prompt,
          static_cast<std::size_t>(space_.responses_per_prompt)};
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf/NaN upstream)
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  std::vector<double> out(xs.size());
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i] = std::exp(xs[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

double PolicyParams::log_prob(int prompt, int response) const {
  check_response(response);
  const auto r = row(prompt);
  return r[static_cast<std::size_t>(response)] - log_sum_exp(r);
}

std::vector<double> PolicyParams::log_prob_row(int prompt) const {
  const auto r = row(prompt);
  const double lse = log_sum_exp(r);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] - lse;
  return out;
}

std::vector<double> PolicyParams::prob_row(int prompt) const { return softmax(row(prompt)); }

std::vector<double> PolicyParams::grad_log_prob(int prompt, int response) const {
  check_response(response);
  std::vector<double> g = softmax(row(prompt));
  for (double& v : g) v = -v;
  g[static_cast<std::size_t>(response)] += 1.0;
  return g;
}

int PolicyParams::argmax_response(int prompt) const {
  const auto r = row(prompt);
  int best = 0;
  for (int v = 1; v < space_.responses_per_prompt; ++v)
    if (r[static_cast<std::size_t>(v)] > r[static_cast<std::size_t>(best)]) best = v;
  return best;
}

nlohmann::json PolicyParams::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int p = 0; p < space_.num_prompts; ++p) {
    const auto r = row(p);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"num_prompts", space_.num_prompts},
          {"responses_per_prompt", space_.responses_per_prompt},
          {"logits", rows}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& j) {
  TaskSpace space{j.at("num_prompts").get<int>(), j.at("responses_per_prompt").get<int>()};
  PolicyParams out(space);
  const auto& rows = j.at("logits");
  if (!rows.is_array() || static_cast<int>(rows.size()) != space.num_prompts)
    throw ValidationError("PolicyParams: logits row count does not match num_prompts");
  for (int p = 0; p < space.num_prompts; ++p) {
    const auto& r = rows[static_cast<std::size_t>(p)];
    if (!r.is_array() || static_cast<int>(r.size()) != space.responses_per_prompt)
      throw ValidationError("PolicyParams: logits row " + std::to_string(p) +
                            " has wrong length");
    for (int v = 0; v < space.responses_per_prompt; ++v) {
      const double x = r[static_cast<std::size_t>(v)].get<double>();
      if (!std::isfinite(x))
        throw ValidationError("PolicyParams: non-finite logit at (" + std::to_string(p) + ", " +
                              std::to_string(v) + ")");
      out.logit(p, v) = x;
    }
  }
  return out;
}

CandidateSet sample_candidates(const PolicyParams& params, int prompt, int n,
                               double temperature, Rng& rng) {
  if (n < 2) throw ValidationError("sample_candidates: n must be >= 2");
  if (!(temperature > 0.0))
    throw ValidationError("sample_candidates: temperature must be > 0");
  const auto r = params.row(prompt);
  std::vector<double> scaled(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) scaled[i] = r[i] / temperature;
  const std::vector<double> probs = softmax(scaled);

  CandidateSet out;
  out.prompt = prompt;
  out.responses.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(probs.size()) - 1;  // absorb round-off at the top
    for (std::size_t v = 0; v < probs.size(); ++v) {
      acc += probs[v];
      if (u < acc) {
        pick = static_cast<int>(v);
        break;
      }
    }
    out.responses.push_back(pick);
  }
  return out;
}

void attach_log_probs(CandidateSet& set, const std::string& label, const PolicyParams& params) {
  const std::vector<double> lp = params.log_prob_row(set.prompt);
  std::vector<double> col;
  col.reserve(set.responses.size());
  for (int resp : set.responses) {
    if (resp < 0 || resp >= params.responses_per_prompt())
      throw ValidationError("attach_log_probs: candidate response out of range");
    col.push_back(lp[static_cast<std::size_t>(resp)]);
  }
  set.log_probs[label] = std::move(col);
}

nlohmann::json CandidateSet::to_json() const {
  nlohmann::json lp = nlohmann::json::object();
  for (const auto& [label, col] : log_probs) lp[label] = col;
  return {{"prompt", prompt}, {"responses", responses}, {"log_probs", lp}};
}

CandidateSet CandidateSet::from_json(const nlohmann::json& j) {
  CandidateSet out;
  out.prompt = j.at("prompt").get<int>();
  out.responses = j.at("responses").get<std::vector<int>>();
  if (j.contains("log_probs"))
    for (const auto& [label, col] : j.at("log_probs").items())
      out.log_probs[label] = col.get<std::vector<double>>();
  return out;
}

}  // namespace cream
