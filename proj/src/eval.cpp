#include "mdpo/eval.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mdpo/errors.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

namespace {

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kA:
      return "A";
    case Outcome::kB:
      return "B";
    case Outcome::kTie:
      return "tie";
  }
  return "tie";
}

}  // namespace

Outcome RewardJudge::judge(const Prompt& prompt, const Response& a, const Response& b) const {
  const double sa = scorer_.score(prompt, a);
  const double sb = scorer_.score(prompt, b);
  if (sa > sb) {
    return Outcome::kA;
  }
  if (sb > sa) {
    return Outcome::kB;
  }
  return Outcome::kTie;
}

std::string LlmJudge::render_request(std::string_view prompt, std::string_view a, std::string_view b) {
  std::string out;
  out += "Which response follows the instruction better?\n";
  out += "Instruction: ";
  out += prompt;
  out += "\nResponse A: ";
  out += a;
  out += "\nResponse B: ";
  out += b;
  out += "\nAnswer with exactly one of: A, B, tie.\n";
  return out;
}

Outcome LlmJudge::parse_verdict(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !std::isalnum(static_cast<unsigned char>(reply[i]))) {
    ++i;
  }
  std::string word;
  while (i < reply.size() && std::isalnum(static_cast<unsigned char>(reply[i]))) {
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i]))));
    ++i;
  }
  if (word == "a") {
    return Outcome::kA;
  }
  if (word == "b") {
    return Outcome::kB;
  }
  if (word == "tie") {
    return Outcome::kTie;
  }
  throw BackendError("judge reply has no verdict: '" + std::string(reply.substr(0, 80)) + "'");
}

Outcome LlmJudge::judge(const Prompt& prompt, const Response& a, const Response& b) const {
  if (a.tokens() == b.tokens()) {
    return Outcome::kTie;
  }
  const auto reply = backend_.complete(
      render_request(vocab_.decode(prompt.tokens()), vocab_.decode(a.tokens()), vocab_.decode(b.tokens())), 0.0,
      fnv1a64(prompt.id()));
  return parse_verdict(reply);
}

double win_rate_of(std::size_t wins, std::size_t losses, std::size_t ties) {
  const std::size_t total = wins + losses + ties;
  if (total == 0) {
    return 0.5;
  }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(total);
}

std::pair<double, double> bootstrap_interval(std::span<const Outcome> outcomes, int resamples, std::uint64_t seed) {
  if (outcomes.empty() || resamples < 1) {
    return {0.5, 0.5};
  }
  Rng rng(seed);
  std::vector<double> rates(static_cast<std::size_t>(resamples));
  for (auto& rate : rates) {
    std::size_t w = 0;
    std::size_t l = 0;
    std::size_t t = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      switch (outcomes[rng.index(outcomes.size())]) {
        case Outcome::kA:
          ++w;
          break;
        case Outcome::kB:
          ++l;
          break;
        case Outcome::kTie:
          ++t;
          break;
      }
    }
    rate = win_rate_of(w, l, t);
  }
  std::sort(rates.begin(), rates.end());
  const auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(rates.size() - 1) + 0.5);
    return rates[std::min(idx, rates.size() - 1)];
  };
  return {at(0.025), at(0.975)};
}

WinRateReport head_to_head(const PolicyParams& policy_a, const PolicyParams& policy_b, std::span<const Prompt> prompts,
                           const Judge& judge, const SamplingConfig& sampling) {
  if (prompts.empty()) {
    throw std::invalid_argument("head_to_head: no prompts");
  }
  WinRateReport report;
  std::vector<Outcome> judged;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto seed = derive_seed(sampling.seed, "head-to-head", i);
    const auto a = sample_response(policy_a, prompts[i], sampling.temperature, sampling.max_len, seed);
    const auto b = sample_response(policy_b, prompts[i], sampling.temperature, sampling.max_len, seed);
    PromptJudgement pj{prompts[i].id(), std::nullopt, {}};
    try {
      pj.outcome = judge.judge(prompts[i], a, b);
    } catch (const std::exception& e) {
      pj.error = e.what();
    }
    if (pj.outcome) {
      judged.push_back(*pj.outcome);
      switch (*pj.outcome) {
        case Outcome::kA:
          ++report.wins;
          break;
        case Outcome::kB:
          ++report.losses;
          break;
        case Outcome::kTie:
          ++report.ties;
          break;
      }
    } else {
      ++report.skipped;
    }
    report.judgements.push_back(std::move(pj));
  }
  report.win_rate = win_rate_of(report.wins, report.losses, report.ties);
  std::tie(report.ci_low, report.ci_high) =
      bootstrap_interval(judged, sampling.bootstrap_resamples, derive_seed(sampling.seed, "bootstrap"));
  return report;
}

std::string WinRateReport::to_json() const {
  nlohmann::ordered_json j;
  j["win_rate"] = win_rate;
  j["ci95"] = {ci_low, ci_high};
  j["wins"] = wins;
  j["losses"] = losses;
  j["ties"] = ties;
  j["skipped"] = skipped;
  auto per_prompt = nlohmann::ordered_json::array();
  for (const auto& pj : judgements) {
    nlohmann::ordered_json e;
    e["id"] = pj.prompt_id;
    if (pj.outcome) {
      e["outcome"] = std::string(outcome_name(*pj.outcome));
    } else {
      e["outcome"] = nullptr;
      e["error"] = pj.error;
    }
    per_prompt.push_back(std::move(e));
  }
  j["judgements"] = std::move(per_prompt);
  return j.dump(2) + "\n";
}

std::string WinRateReport::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "wins     " << wins << "\n"
     << "losses   " << losses << "\n"
     << "ties     " << ties << "\n"
     << "skipped  " << skipped << "\n"
     << "win rate " << win_rate << "  (95% CI " << ci_low << " - " << ci_high << ")\n";
  return os.str();
}

std::string WinRateReport::to_csv() const {
  std::ostringstream os;
  os << "prompt_id,outcome,score\n";
  for (const auto& pj : judgements) {
    os << pj.prompt_id << ',';
    if (pj.outcome) {
      const double s = *pj.outcome == Outcome::kA ? 1.0 : (*pj.outcome == Outcome::kB ? 0.0 : 0.5);
      os << outcome_name(*pj.outcome) << ',' << s << '\n';
    } else {
      os << "skipped,\n";
    }
  }
  return os.str();
}

double ranking_accuracy(const PolicyParams& theta, const PolicyParams& ref, Beta beta,
                        std::span<const RankedExample> ranked) {
  if (ranked.empty()) {
    throw std::invalid_argument("ranking_accuracy: empty dataset");
  }
  double correct = 0.0;
  std::size_t total = 0;
  for (const auto& ex : ranked) {
    std::vector<double> r(ex.n());
    for (std::size_t i = 0; i < ex.n(); ++i) {
      r[i] = implicit_reward(theta, ref, beta, ex.prompt(), ex.responses()[i]);
    }
    for (std::size_t i = 0; i < ex.n(); ++i) {
      for (std::size_t k = i + 1; k < ex.n(); ++k) {
        correct += r[i] > r[k] ? 1.0 : (r[i] == r[k] ? 0.5 : 0.0);
        ++total;
      }
    }
  }
  return correct / static_cast<double>(total);
}

}  // namespace mdpo
