#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "cream/policy.hpp"
#include "cream/rng.hpp"

using namespace cream;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

PolicyParams tiny_policy() {
  // One prompt, three responses with logits [0, 0, log 3]:
  // softmax = [1/5, 1/5, 3/5].
  PolicyParams p(TaskSpace{1, 3});
  p.logit(0, 2) = std::log(3.0);
  return p;
}

}  // namespace

TEST_CASE("task space validation") {
  CHECK_THROWS_AS((TaskSpace{0, 3}.validate()), ValidationError);
  CHECK_THROWS_AS((TaskSpace{3, 0}.validate()), ValidationError);
  CHECK_THROWS_AS((TaskSpace{-1, 4}.validate()), ValidationError);
  CHECK_NOTHROW((TaskSpace{1, 2}.validate()));
}

TEST_CASE("log-sum-exp and softmax agree with hand values") {
  const std::vector<double> zeros{0.0, 0.0, 0.0, 0.0};
  CHECK(log_sum_exp(zeros) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  const std::vector<double> row{0.0, 0.0, std::log(3.0)};
  const std::vector<double> probs = softmax(row);
  CHECK(probs[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(probs[1] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(probs[2] == doctest::Approx(0.6).epsilon(1e-14));

  // Shift invariance: adding 1000 must not overflow.
  const std::vector<double> shifted{1000.0, 1000.0, 1000.0 + std::log(3.0)};
  CHECK(log_sum_exp(shifted) == doctest::Approx(1000.0 + std::log(5.0)).epsilon(1e-14));
  const std::vector<double> sprobs = softmax(shifted);
  CHECK(sprobs[2] == doctest::Approx(0.6).epsilon(1e-13));
}

TEST_CASE("log probability matches closed form") {
  const PolicyParams p = tiny_policy();
  CHECK(p.log_prob(0, 2) == doctest::Approx(std::log(0.6)).epsilon(1e-14));
  CHECK(p.log_prob(0, 0) == doctest::Approx(std::log(0.2)).epsilon(1e-14));

  const std::vector<double> lp = p.log_prob_row(0);
  CHECK(lp.size() == 3);
  for (int v = 0; v < 3; ++v) CHECK(lp[static_cast<std::size_t>(v)] == p.log_prob(0, v));

  double mass = 0.0;
  for (double pr : p.prob_row(0)) mass += pr;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("log-prob gradient is onehot minus softmax") {
  const PolicyParams p = tiny_policy();
  const std::vector<double> g = p.grad_log_prob(0, 2);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(-0.2).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-0.2).epsilon(1e-14));
  CHECK(g[2] == doctest::Approx(0.4).epsilon(1e-14));

  // Central finite differences on the log-prob itself.
  for (int coord = 0; coord < 3; ++coord) {
    const double h = 1e-6;
    PolicyParams up = p, down = p;
    up.logit(0, coord) += h;
    down.logit(0, coord) -= h;
    const double fd = (up.log_prob(0, 2) - down.log_prob(0, 2)) / (2.0 * h);
    CHECK(fd == doctest::Approx(g[static_cast<std::size_t>(coord)]).epsilon(1e-6));
  }
}

TEST_CASE("index range checks throw") {
  const PolicyParams p = tiny_policy();
  CHECK_THROWS_AS(p.logit(1, 0), ValidationError);
  CHECK_THROWS_AS(p.logit(0, 3), ValidationError);
  CHECK_THROWS_AS(p.logit(-1, 0), ValidationError);
  CHECK_THROWS_AS(p.log_prob(0, -1), ValidationError);
  CHECK_THROWS_AS(p.row(2), ValidationError);
}

TEST_CASE("greedy argmax breaks ties toward the lowest index") {
  PolicyParams p(TaskSpace{2, 4});
  p.logit(0, 1) = 2.0;
  p.logit(0, 3) = 2.0;  // tie with response 1
  CHECK(p.argmax_response(0) == 1);
  CHECK(p.argmax_response(1) == 0);  // all-zero row
}

TEST_CASE("json round-trip is bit-faithful") {
  Rng rng(42);
  PolicyParams p(TaskSpace{3, 5});
  for (double& x : p.flat()) x = 3.0 * rng.normal();
  const PolicyParams q = PolicyParams::from_json(p.to_json());
  CHECK(q == p);
  for (std::size_t i = 0; i < p.flat().size(); ++i) CHECK(same_bits(p.flat()[i], q.flat()[i]));
}

TEST_CASE("json validation rejects malformed input") {
  const PolicyParams p = tiny_policy();
  nlohmann::json j = p.to_json();
  SUBCASE("wrong row count") {
    j["num_prompts"] = 2;
    CHECK_THROWS_AS(PolicyParams::from_json(j), ValidationError);
  }
  SUBCASE("non-finite logit") {
    j["logits"][0][1] = "not-a-number";
    CHECK_THROWS(PolicyParams::from_json(j));
  }
  SUBCASE("missing field") {
    j.erase("logits");
    CHECK_THROWS(PolicyParams::from_json(j));
  }
}

TEST_CASE("sampling validates its arguments") {
  const PolicyParams p = tiny_policy();
  Rng rng(7);
  CHECK_THROWS_AS(sample_candidates(p, 0, 1, 1.0, rng), ValidationError);
  CHECK_THROWS_AS(sample_candidates(p, 0, 4, 0.0, rng), ValidationError);
  CHECK_THROWS_AS(sample_candidates(p, 1, 4, 1.0, rng), ValidationError);
}

TEST_CASE("sampling is deterministic per seed") {
  const PolicyParams p = tiny_policy();
  Rng a(123), b(123), c(124);
  const CandidateSet s1 = sample_candidates(p, 0, 6, 0.8, a);
  const CandidateSet s2 = sample_candidates(p, 0, 6, 0.8, b);
  const CandidateSet s3 = sample_candidates(p, 0, 6, 0.8, c);
  CHECK(s1.responses == s2.responses);
  CHECK(s1.responses != s3.responses);  // overwhelmingly likely for 6 draws
  CHECK(s1.prompt == 0);
  CHECK(s1.responses.size() == 6);
}

TEST_CASE("sampling frequencies match the softmax within 3 standard errors") {
  const PolicyParams p = tiny_policy();  // probs [0.2, 0.2, 0.6] at T = 1
  Rng rng(2024);
  const int draws = 60000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < draws / 5; ++i) {
    const CandidateSet s = sample_candidates(p, 0, 5, 1.0, rng);
    for (int r : s.responses) ++counts[static_cast<std::size_t>(r)];
  }
  const double expected[] = {0.2, 0.2, 0.6};
  for (int v = 0; v < 3; ++v) {
    const double freq = static_cast<double>(counts[static_cast<std::size_t>(v)]) / draws;
    const double se = std::sqrt(expected[v] * (1.0 - expected[v]) / draws);
    CHECK(std::abs(freq - expected[v]) <= 3.0 * se);
  }
}

TEST_CASE("temperature reshapes the sampling distribution") {
  PolicyParams p(TaskSpace{1, 2});
  p.logit(0, 0) = 1.0;  // pi(0) = sigma(1) at T=1; sharper at T=0.25
  Rng rng(99);
  int hot = 0, cold = 0;
  const int reps = 4000;
  for (int i = 0; i < reps; ++i) {
    Rng r1(derive_seed(5, {static_cast<std::uint64_t>(i), 1}));
    Rng r2(derive_seed(5, {static_cast<std::uint64_t>(i), 2}));
    for (int r : sample_candidates(p, 0, 2, 4.0, r1).responses) hot += (r == 0);
    for (int r : sample_candidates(p, 0, 2, 0.25, r2).responses) cold += (r == 0);
  }
  const double hot_rate = hot / (2.0 * reps), cold_rate = cold / (2.0 * reps);
  CHECK(hot_rate < cold_rate);
  CHECK(cold_rate > 0.95);  // sigma(4) ~ 0.982
  CHECK(hot_rate < 0.70);   // sigma(0.25) ~ 0.562
}

TEST_CASE("attached log-prob columns store exact policy values") {
  const PolicyParams p = tiny_policy();
  PolicyParams q = tiny_policy();
  q.logit(0, 0) = 1.5;
  Rng rng(31);
  CandidateSet s = sample_candidates(p, 0, 4, 1.0, rng);
  attach_log_probs(s, "a", p);
  attach_log_probs(s, "b", q);
  REQUIRE(s.log_probs.count("a") == 1);
  REQUIRE(s.log_probs.count("b") == 1);
  for (std::size_t i = 0; i < s.responses.size(); ++i) {
    CHECK(same_bits(s.log_probs["a"][i], p.log_prob(0, s.responses[i])));
    CHECK(same_bits(s.log_probs["b"][i], q.log_prob(0, s.responses[i])));
  }
  const CandidateSet back = CandidateSet::from_json(s.to_json());
  CHECK(back.responses == s.responses);
  CHECK(back.log_probs == s.log_probs);
}
