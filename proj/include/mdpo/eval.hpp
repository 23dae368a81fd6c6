#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdpo/backends.hpp"
#include "mdpo/core.hpp"
#include "mdpo/losses.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/reward_model.hpp"

namespace mdpo {

enum class Outcome { kA, kB, kTie };

/// Picks the better of two responses to the same prompt. judge(p, a, a) must
/// be a tie.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual Outcome judge(const Prompt& prompt, const Response& a, const Response& b) const = 0;
};

/// Ground-truth judge: higher reward wins, equal rewards tie.
class RewardJudge final : public Judge {
 public:
  explicit RewardJudge(RewardParams params) : scorer_(std::move(params)) {}
  Outcome judge(const Prompt& prompt, const Response& a, const Response& b) const override;

 private:
  LinearScorer scorer_;
};

/// Asks a chat model which response is better and reads "A", "B" or "tie"
/// from the start of the reply. Identical responses tie without a call.
class LlmJudge final : public Judge {
 public:
  LlmJudge(GenBackend& backend, Vocabulary vocab) : backend_(backend), vocab_(std::move(vocab)) {}
  Outcome judge(const Prompt& prompt, const Response& a, const Response& b) const override;

  static std::string render_request(std::string_view prompt, std::string_view a, std::string_view b);
  /// Throws BackendError when the reply names no verdict.
  static Outcome parse_verdict(std::string_view reply);

 private:
  GenBackend& backend_;
  Vocabulary vocab_;
};

struct SamplingConfig {
  double temperature = 1.0;
  std::uint32_t max_len = PolicyParams::kDefaultMaxLen;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 1000;
};

struct PromptJudgement {
  std::string prompt_id;
  std::optional<Outcome> outcome;  // empty when the judge failed
  std::string error;
};

struct WinRateReport {
  std::vector<PromptJudgement> judgements;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::size_t skipped = 0;
  /// (wins + 0.5 ties) / judged prompts, from policy A's side.
  double win_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  std::string to_json() const;
  std::string to_table() const;
  std::string to_csv() const;
};

/// (wins + 0.5 ties) / (wins + losses + ties); 0.5 when nothing was judged.
double win_rate_of(std::size_t wins, std::size_t losses, std::size_t ties);

/// Percentile bootstrap 95% interval of the win rate.
std::pair<double, double> bootstrap_interval(std::span<const Outcome> outcomes, int resamples, std::uint64_t seed);

/// One response per policy per prompt, both drawn with the prompt's seed, then
/// judged. Judge exceptions mark the prompt skipped. Throws
/// std::invalid_argument for an empty prompt list.
WinRateReport head_to_head(const PolicyParams& policy_a, const PolicyParams& policy_b, std::span<const Prompt> prompts,
                           const Judge& judge, const SamplingConfig& sampling = {});

/// Fraction of within-example pairs (i < k) whose implicit rewards are
/// ordered like the ranking; exact ties count one half.
double ranking_accuracy(const PolicyParams& theta, const PolicyParams& ref, Beta beta,
                        std::span<const RankedExample> ranked);

}  // namespace mdpo
