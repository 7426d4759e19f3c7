#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "cream/losses.hpp"
#include "cream/policy.hpp"
#include "cream/rewarding.hpp"

namespace cream {

// One training example: best-vs-worst responses for a prompt plus the soft
// label weight attached by the composing variant.
struct PreferenceRecord {
  int prompt = 0;
  int winner = 0;  // response index, not candidate slot
  int loser = 0;
  double soft_weight = 1.0;
  double tau = 0.0;  // per-prompt ranking agreement that informed the weight

  nlohmann::json to_json() const;  // {"prompt", "winner", "loser", "c"}
  static PreferenceRecord from_json(const nlohmann::json& j);
};

// Hard label from the implicit reward order under `policy` vs `reference`:
// 1 when r(y) >= r(y'), else 0.
int label_z(const PolicyParams& policy, const PolicyParams& reference, int prompt, int y,
            int y_prime);

enum class ComposeVariant {
  averaged,    // every record carries the dataset-level consistency rate
  dynamic,     // each record carries its own prompt's (tau + 1) / 2
  thresholded  // weight 1 where (tau + 1) / 2 > threshold, else the dataset rate
};

struct ComposeResult {
  std::vector<PreferenceRecord> records;
  int skipped = 0;  // prompts whose best and worst candidates coincide
};

// Build best-vs-worst records from per-prompt rankings.  `taus[i]` is the
// ranking agreement for batch[i]; `dataset_c` the dataset-level soft label.
// Prompts whose extreme candidates map to one response are skipped and
// counted, so records + skipped == batch size.
ComposeResult compose_pairs(std::span<const CandidateSet> batch,
                            std::span<const RankedList> ranks, std::span<const double> taus,
                            SoftLabel dataset_c, ComposeVariant variant,
                            double threshold = 0.9);

// One compact JSON object per line.
void write_records_jsonl(std::ostream& os, std::span<const PreferenceRecord> records);
std::vector<PreferenceRecord> read_records_jsonl(std::istream& is);

}  // namespace cream
