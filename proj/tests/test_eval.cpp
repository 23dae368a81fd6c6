#include <doctest.h>

#include <json.hpp>

#include "mdpo/errors.hpp"
#include "mdpo/eval.hpp"
#include "mdpo/synthetic.hpp"
#include "oracles.hpp"

using namespace mdpo;

namespace {

std::vector<Prompt> prompts(oracle::Gen& gen, std::size_t v, std::size_t count) {
  std::vector<Prompt> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back("q" + std::to_string(i), gen.tokens(v, 1, 4));
  }
  return out;
}

/// Prefers the longer response; throws on prompts whose id ends in '3'.
class PickyJudge final : public Judge {
 public:
  Outcome judge(const Prompt& p, const Response& a, const Response& b) const override {
    if (p.id().back() == '3') {
      throw BackendError("judge unavailable");
    }
    if (a.size() == b.size()) {
      return Outcome::kTie;
    }
    return a.size() > b.size() ? Outcome::kA : Outcome::kB;
  }
};

class CannedBackend final : public GenBackend {
 public:
  explicit CannedBackend(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const std::string& prompt, double, std::uint64_t) override {
    last_prompt = prompt;
    ++calls;
    return reply_;
  }
  std::string last_prompt;
  int calls = 0;

 private:
  std::string reply_;
};

}  // namespace

TEST_CASE("win rate arithmetic") {
  CHECK(win_rate_of(3, 1, 0) == 0.75);
  CHECK(win_rate_of(1, 1, 2) == 0.5);
  CHECK(win_rate_of(0, 0, 0) == 0.5);
  CHECK(win_rate_of(0, 2, 2) == 0.25);
}

TEST_CASE("a policy against itself ties everywhere") {
  oracle::Gen gen(50);
  const auto p = gen.policy(6, 1.0);
  const auto qs = prompts(gen, 6, 40);
  const RewardJudge judge(planted_reward(synthetic_vocabulary(5), 1.0, 1));
  const auto r = head_to_head(p, p, qs, judge);
  CHECK(r.win_rate == 0.5);
  CHECK(r.ties == 40);
  CHECK(r.ci_low == 0.5);
  CHECK(r.ci_high == 0.5);
}

TEST_CASE("swapping sides mirrors the win rate") {
  oracle::Gen gen(51);
  const auto vocab = synthetic_vocabulary(5);
  const auto a = gen.policy(6, 1.0);
  const auto b = gen.policy(6, 1.0);
  const auto qs = prompts(gen, 6, 60);
  const RewardJudge judge(planted_reward(vocab, 1.0, 2));
  const auto ab = head_to_head(a, b, qs, judge);
  const auto ba = head_to_head(b, a, qs, judge);
  CHECK(ab.win_rate + ba.win_rate == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ab.wins == ba.losses);
  CHECK(ab.ties == ba.ties);
  CHECK(ab.ci_low <= ab.win_rate);
  CHECK(ab.win_rate <= ab.ci_high);
}

TEST_CASE("head to head is deterministic per seed") {
  oracle::Gen gen(52);
  const auto a = gen.policy(5, 1.0);
  const auto b = gen.policy(5, 1.0);
  const auto qs = prompts(gen, 5, 30);
  const RewardJudge judge(planted_reward(synthetic_vocabulary(4), 1.0, 3));
  SamplingConfig s;
  s.seed = 9;
  CHECK(head_to_head(a, b, qs, judge, s).to_json() == head_to_head(a, b, qs, judge, s).to_json());
}

TEST_CASE("judge failures mark prompts skipped") {
  oracle::Gen gen(53);
  const auto a = gen.policy(5, 1.0);
  const auto b = gen.policy(5, 1.0);
  const auto qs = prompts(gen, 5, 20);
  const auto r = head_to_head(a, b, qs, PickyJudge{});
  CHECK(r.skipped == 2);  // q3 and q13
  CHECK(r.wins + r.losses + r.ties == 18);
  CHECK(r.win_rate == doctest::Approx(win_rate_of(r.wins, r.losses, r.ties)));
  CHECK_FALSE(r.judgements[3].outcome.has_value());
  CHECK(r.judgements[3].error.find("unavailable") != std::string::npos);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["skipped"] == 2);
  CHECK(j["judgements"][3]["outcome"].is_null());
  CHECK(j["judgements"].size() == 20);

  const auto csv = oracle::lines_of(r.to_csv());
  REQUIRE(csv.size() == 21);
  CHECK(csv[0] == "prompt_id,outcome,score");
  CHECK(csv[4] == "q3,skipped,");
  CHECK(r.to_table().find("skipped  2") != std::string::npos);

  CHECK_THROWS_AS(head_to_head(a, b, std::vector<Prompt>{}, PickyJudge{}), std::invalid_argument);
}

TEST_CASE("bootstrap interval") {
  const std::vector<Outcome> all_a(50, Outcome::kA);
  CHECK(bootstrap_interval(all_a, 500, 1) == std::pair<double, double>{1.0, 1.0});
  std::vector<Outcome> mixed;
  for (int i = 0; i < 100; ++i) {
    mixed.push_back(i % 4 == 0 ? Outcome::kB : Outcome::kA);
  }
  const auto [lo, hi] = bootstrap_interval(mixed, 2000, 2);
  CHECK(lo < 0.75);
  CHECK(hi > 0.75);
  CHECK(lo > 0.6);
  CHECK(hi < 0.9);
  CHECK(bootstrap_interval(mixed, 2000, 2) == std::pair<double, double>{lo, hi});
  CHECK(bootstrap_interval({}, 100, 1) == std::pair<double, double>{0.5, 0.5});
}

TEST_CASE("verdict parsing") {
  CHECK(LlmJudge::parse_verdict("A") == Outcome::kA);
  CHECK(LlmJudge::parse_verdict("  b.") == Outcome::kB);
  CHECK(LlmJudge::parse_verdict("Tie - both fine") == Outcome::kTie);
  CHECK(LlmJudge::parse_verdict("**A** is better") == Outcome::kA);
  CHECK_THROWS_AS(LlmJudge::parse_verdict("Answer: A"), BackendError);
  CHECK_THROWS_AS(LlmJudge::parse_verdict(""), BackendError);
}

TEST_CASE("llm judge sends both responses and skips identical ones") {
  CannedBackend backend("B");
  const Vocabulary vocab({"hello", "world", "there"});
  const LlmJudge judge(backend, vocab);
  const Prompt x("x", {0});
  CHECK(judge.judge(x, Response({1}), Response({2})) == Outcome::kB);
  CHECK(backend.last_prompt.find("Response A: world") != std::string::npos);
  CHECK(backend.last_prompt.find("Response B: there") != std::string::npos);
  CHECK(judge.judge(x, Response({1}), Response({1}, ResponseSource::kPolicy, 1)) == Outcome::kTie);
  CHECK(backend.calls == 1);
}

TEST_CASE("ranking accuracy") {
  const Prompt x("x", {0});
  const std::vector<Response> ys{Response({1}, ResponseSource::kPolicy, 0), Response({2}, ResponseSource::kPolicy, 1),
                                 Response({3}, ResponseSource::kPolicy, 2)};
  const RankedExample ex(x, ys, {3.0, 2.0, 1.0});
  const PolicyParams ref(4);

  // Favour token 1 over 2 over 3 after token 0.
  std::vector<double> table(5 * 4, 0.0);
  table[0 * 4 + 1] = 2.0;
  table[0 * 4 + 2] = 1.0;
  const PolicyParams good(4, 32, 3, table);
  CHECK(ranking_accuracy(good, ref, Beta(), std::vector<RankedExample>{ex}) == 1.0);

  std::vector<double> rev(5 * 4, 0.0);
  rev[0 * 4 + 3] = 2.0;
  rev[0 * 4 + 2] = 1.0;
  const PolicyParams bad(4, 32, 3, rev);
  CHECK(ranking_accuracy(bad, ref, Beta(), std::vector<RankedExample>{ex}) == 0.0);

  // Identical policies tie every pair.
  CHECK(ranking_accuracy(ref, ref, Beta(), std::vector<RankedExample>{ex}) == 0.5);
  CHECK_THROWS_AS(ranking_accuracy(ref, ref, Beta(), std::vector<RankedExample>{}), std::invalid_argument);
}
