#include "cream/pairs.hpp"

#include <istream>
#include <ostream>
#include <string>

namespace cream {

nlohmann::json PreferenceRecord::to_json() const {
  return {{"prompt", prompt}, {"winner", winner}, {"loser", loser}, {"c", soft_weight}};
}

PreferenceRecord PreferenceRecord::from_json(const nlohmann::json& j) {
  PreferenceRecord r;
  r.prompt = j.at("prompt").get<int>();
  r.winner = j.at("winner").get<int>();
  r.loser = j.at("loser").get<int>();
  r.soft_weight = j.at("c").get<double>();
  if (r.winner == r.loser)
    throw ValidationError("PreferenceRecord: winner and loser must differ");
  if (!(r.soft_weight >= 0.0 && r.soft_weight <= 1.0))
    throw ValidationError("PreferenceRecord: c must lie in [0, 1]");
  return r;
}

int label_z(const PolicyParams& policy, const PolicyParams& reference, int prompt, int y,
            int y_prime) {
  if (y == y_prime) throw ValidationError("label_z: y and y' must differ");
  const double ry = policy.log_prob(prompt, y) - reference.log_prob(prompt, y);
  const double ryp = policy.log_prob(prompt, y_prime) - reference.log_prob(prompt, y_prime);
  return ry >= ryp ? 1 : 0;
}

ComposeResult compose_pairs(std::span<const CandidateSet> batch,
                            std::span<const RankedList> ranks, std::span<const double> taus,
                            SoftLabel dataset_c, ComposeVariant variant, double threshold) {
  if (batch.size() != ranks.size() || batch.size() != taus.size())
    throw ValidationError("compose_pairs: batch/ranks/taus size mismatch");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError("compose_pairs: threshold must lie in [0, 1]");

  ComposeResult out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (ranks[i].ranks.size() != batch[i].responses.size())
      throw ValidationError("compose_pairs: ranking length does not match candidates");
    const int best = ranks[i].best_candidate();
    const int worst = ranks[i].worst_candidate();
    const int winner = batch[i].responses[static_cast<std::size_t>(best)];
    const int loser = batch[i].responses[static_cast<std::size_t>(worst)];
    if (winner == loser) {
      ++out.skipped;
      continue;
    }
    PreferenceRecord rec;
    rec.prompt = batch[i].prompt;
    rec.winner = winner;
    rec.loser = loser;
    rec.tau = taus[i];
    const double per_prompt = (taus[i] + 1.0) / 2.0;
    switch (variant) {
      case ComposeVariant::averaged:
        rec.soft_weight = dataset_c.value;
        break;
      case ComposeVariant::dynamic:
        rec.soft_weight = per_prompt;
        break;
      case ComposeVariant::thresholded:
        rec.soft_weight = per_prompt > threshold ? 1.0 : dataset_c.value;
        break;
    }
    out.records.push_back(rec);
  }
  return out;
}

void write_records_jsonl(std::ostream& os, std::span<const PreferenceRecord> records) {
  for (const PreferenceRecord& rec : records) os << rec.to_json().dump() << '\n';
}

std::vector<PreferenceRecord> read_records_jsonl(std::istream& is) {
  std::vector<PreferenceRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(PreferenceRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace cream
