#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdpo/core.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/reward_model.hpp"
#include "mdpo/rng.hpp"
#include "mdpo/trainer.hpp"

namespace mdpo {

// Synthetic ground-truth data: a planted reward model plays the role of human
// preference, so every label and judgement is known exactly.

/// Words "w0" ... "w{count-1}" (plus the end-of-sequence token).
Vocabulary synthetic_vocabulary(std::size_t count);

/// Uniformly random token sequence of length in [min_len, max_len] that never
/// contains the end-of-sequence token.
TokenSeq random_tokens(const Vocabulary& vocab, std::size_t min_len, std::size_t max_len, Rng& rng);

std::vector<Prompt> random_prompts(const Vocabulary& vocab, std::size_t count, std::size_t min_len,
                                   std::size_t max_len, std::uint64_t seed, const std::string& id_prefix = "p");

/// Unigram weights ~ N(0, scale^2); length and overlap weights zero.
RewardParams planted_reward(const Vocabulary& vocab, double scale, std::uint64_t seed);

/// Random prompt and two random responses per pair; the chosen side is drawn
/// with the planted Bradley-Terry probability.
std::vector<PreferencePair> planted_pairs(const RewardParams& planted, std::size_t count, std::uint64_t seed,
                                          const std::string& id_prefix = "pair");

/// `n` policy samples per prompt ranked by the planted reward.
std::vector<RankedExample> planted_ranked(const PolicyParams& policy, const std::vector<Prompt>& prompts,
                                          const RewardParams& planted, std::size_t n, double temperature,
                                          std::uint32_t max_len, std::uint64_t seed);

/// Fraction of pairs the scorer orders the same way as the planted reward,
/// counting planted ties as agreement only when the scorer also ties.
double pairwise_agreement(const RewardParams& learned, const RewardParams& planted,
                          const std::vector<PreferencePair>& pairs);

struct PlantedExperimentConfig {
  std::size_t vocab_words = 8;
  std::size_t train_examples = 200;
  std::size_t eval_prompts = 400;
  std::size_t heldout_examples = 200;
  std::size_t n = 4;
  double planted_scale = 1.0;
  double reference_scale = 0.5;
  std::uint32_t max_len = 8;
  TrainConfig train = [] {
    TrainConfig c = TrainConfig::desk();
    c.epochs = 30;
    return c;
  }();
};

struct PlantedMethodResult {
  double win_rate_vs_reference = 0.0;
  double ranking_accuracy = 0.0;
  double final_loss = 0.0;
};

struct PlantedExperimentResult {
  PlantedMethodResult mdpo;
  PlantedMethodResult dpo;  // best-versus-worst pairs from the same ranked data
};

/// Trains MDPO on ranked data and DPO on its (rank 1, rank n) pairs from the
/// same reference policy, then scores both against the reference with the
/// planted judge and by implicit-reward ranking accuracy on held-out data.
PlantedExperimentResult run_planted_experiment(const PlantedExperimentConfig& config, std::uint64_t seed);

}  // namespace mdpo
