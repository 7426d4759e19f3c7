#include "cream/consistency.hpp"

#include <cmath>
#include <ostream>

#include "cream/format.hpp"

namespace cream {

static void check_rank_lists(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size())
    throw ValidationError("rank statistics: lists must have equal length");
  if (a.size() < 2) throw ValidationError("rank statistics: need at least 2 candidates");
}

double kendall_tau(std::span<const int> ranks_a, std::span<const int> ranks_b) {
  check_rank_lists(ranks_a, ranks_b);
  const std::size_t n = ranks_a.size();
  long long net = 0;  // concordant minus discordant
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int da = ranks_a[i] - ranks_a[j];
      const int db = ranks_b[i] - ranks_b[j];
      if (da == 0 || db == 0) continue;
      net += ((da > 0) == (db > 0)) ? 1 : -1;
    }
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(net) / pairs;
}

double spearman_rho(std::span<const int> ranks_a, std::span<const int> ranks_b) {
  check_rank_lists(ranks_a, ranks_b);
  const std::size_t n = ranks_a.size();
  long long d2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long long d = ranks_a[i] - ranks_b[i];
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * static_cast<double>(d2) / (nn * (nn * nn - 1.0));
}

int top_order(std::span<const int> ranks_a, std::span<const int> ranks_b) {
  check_rank_lists(ranks_a, ranks_b);
  std::size_t best_a = 0, best_b = 0, worst_a = 0, worst_b = 0;
  for (std::size_t i = 1; i < ranks_a.size(); ++i) {
    if (ranks_a[i] < ranks_a[best_a]) best_a = i;
    if (ranks_a[i] > ranks_a[worst_a]) worst_a = i;
    if (ranks_b[i] < ranks_b[best_b]) best_b = i;
    if (ranks_b[i] > ranks_b[worst_b]) worst_b = i;
  }
  return (best_a == best_b && worst_a == worst_b) ? 1 : 0;
}

double consistency_rate(std::span<const double> taus) {
  if (taus.empty()) throw ValidationError("consistency_rate: empty tau list");
  double acc = 0.0;
  for (double t : taus) {
    if (!(t >= -1.0 && t <= 1.0))
      throw ValidationError("consistency_rate: tau outside [-1, 1]");
    acc += (t + 1.0) / 2.0;
  }
  return acc / static_cast<double>(taus.size());
}

double estimate_lambda(const PolicyParams& current, const PolicyParams& previous,
                       const PolicyParams& reference, int prompt) {
  if (current.space() != previous.space() || current.space() != reference.space())
    throw ValidationError("estimate_lambda: checkpoint shape mismatch");
  const int V = current.responses_per_prompt();
  const std::vector<double> pi = current.prob_row(prompt);
  const std::vector<double> lp_cur = current.log_prob_row(prompt);
  const std::vector<double> lp_prev = previous.log_prob_row(prompt);
  const std::vector<double> lp_ref = reference.log_prob_row(prompt);

  std::vector<double> r_cur(static_cast<std::size_t>(V)), r_prev(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) {
    r_cur[static_cast<std::size_t>(v)] = lp_cur[static_cast<std::size_t>(v)] -
                                         lp_ref[static_cast<std::size_t>(v)];
    r_prev[static_cast<std::size_t>(v)] = lp_prev[static_cast<std::size_t>(v)] -
                                          lp_ref[static_cast<std::size_t>(v)];
  }

  double lambda = 0.0;
  for (int y = 0; y < V; ++y) {
    for (int yp = 0; yp < V; ++yp) {
      const std::size_t a = static_cast<std::size_t>(y);
      const std::size_t b = static_cast<std::size_t>(yp);
      if (r_cur[a] >= r_cur[b] && r_prev[a] < r_prev[b])
        lambda += pi[a] * pi[b];
    }
  }
  return 2.0 * lambda;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

ConsistencyReport ConsistencyReport::build(std::span<const RankedList> current,
                                           std::span<const RankedList> previous) {
  if (current.size() != previous.size() || current.empty())
    throw ValidationError("ConsistencyReport: need matching, nonempty ranking lists");
  ConsistencyReport report;
  std::vector<double> taus, rhos, tops;
  taus.reserve(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (current[i].rewards.prompt != previous[i].rewards.prompt)
      throw ValidationError("ConsistencyReport: prompt mismatch between ranking lists");
    PromptConsistency row;
    row.prompt = current[i].rewards.prompt;
    row.tau = kendall_tau(current[i].ranks, previous[i].ranks);
    row.spearman = spearman_rho(current[i].ranks, previous[i].ranks);
    row.toporder = top_order(current[i].ranks, previous[i].ranks);
    report.rows.push_back(row);
    taus.push_back(row.tau);
    rhos.push_back(row.spearman);
    tops.push_back(static_cast<double>(row.toporder));
  }
  report.rate = consistency_rate(taus);
  report.tau = summarize(taus);
  report.spearman = summarize(rhos);
  report.toporder = summarize(tops);
  return report;
}

void ConsistencyReport::write_csv(std::ostream& os) const {
  os << "prompt_id,tau,spearman,toporder\n";
  for (const PromptConsistency& row : rows)
    os << row.prompt << ',' << format_double(row.tau) << ',' << format_double(row.spearman)
       << ',' << row.toporder << '\n';
  os << "mean," << format_double(tau.mean) << ',' << format_double(spearman.mean) << ','
     << format_double(toporder.mean) << '\n';
  os << "std," << format_double(tau.stddev) << ',' << format_double(spearman.stddev) << ','
     << format_double(toporder.stddev) << '\n';
}

nlohmann::json ConsistencyReport::to_json() const {
  nlohmann::json rws = nlohmann::json::array();
  for (const PromptConsistency& row : rows)
    rws.push_back({{"prompt", row.prompt},
                   {"tau", row.tau},
                   {"spearman", row.spearman},
                   {"toporder", row.toporder}});
  return {{"rows", rws},
          {"consistency_rate", rate},
          {"tau", {{"mean", tau.mean}, {"std", tau.stddev}}},
          {"spearman", {{"mean", spearman.mean}, {"std", spearman.stddev}}},
          {"toporder", {{"mean", toporder.mean}, {"std", toporder.stddev}}}};
}

}  // namespace cream
