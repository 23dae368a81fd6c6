#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdpo/core.hpp"

namespace mdpo {

/// Feature basis, version 1: one unigram count per vocabulary id over the
/// response, then response length, then the number of response positions
/// whose token also occurs in the prompt.
inline constexpr int kFeatureSpecVersion = 1;

std::size_t feature_count(std::size_t vocab_size) noexcept;

/// Throws std::invalid_argument on tokens outside [0, vocab_size).
std::vector<double> reward_features(std::size_t vocab_size, const Prompt& prompt, const Response& response);

/// Linear Bradley-Terry scorer: score = weights . features + bias.
struct RewardParams {
  Vocabulary vocab;
  std::vector<double> weights;
  double bias = 0.0;

  /// Zero weights and bias for `vocab`.
  static RewardParams zeros(Vocabulary vocab);
  /// Throws std::invalid_argument on wrong length or non-finite values.
  void validate() const;
};

struct RewardScore {
  double value;
};

RewardScore score(const RewardParams& params, const Prompt& prompt, const Response& response);

/// Anything that can rate a (prompt, response) pair. Implementations must be
/// safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const Prompt& prompt, const Response& response) const = 0;
};

class LinearScorer final : public Scorer {
 public:
  explicit LinearScorer(RewardParams params) : params_(std::move(params)) { params_.validate(); }
  double score(const Prompt& prompt, const Response& response) const override;
  const RewardParams& params() const noexcept { return params_; }

 private:
  RewardParams params_;
};

struct BtTrainConfig {
  double lr = 0.1;
  int epochs = 200;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  /// Standard deviation of the initial weights; 0 starts from all zeros.
  double init_scale = 0.0;
};

struct BtObjective {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_bias = 0.0;
};

/// mean over pairs of -log sigma(score(chosen) - score(rejected)) + l2 * |w|^2,
/// with its gradient.
BtObjective bt_objective(const RewardParams& params, std::span<const PreferencePair> pairs, double l2);

struct BtFit {
  RewardParams params;
  std::vector<double> loss_trace;  // objective before each epoch's update, then final
};

/// Full-batch gradient descent on the Bradley-Terry negative log-likelihood.
/// Throws TrainingDiverged if the objective rises three epochs in a row.
BtFit train_bt(const Vocabulary& vocab, std::span<const PreferencePair> pairs, const BtTrainConfig& config = {});

/// Stable sort by descending score; exact ties keep the lower gen_index first.
/// Throws std::invalid_argument for fewer than two responses or a non-finite
/// score.
RankedExample rank_responses(const Scorer& scorer, const Prompt& prompt, std::span<const Response> responses);
RankedExample rank_responses(const RewardParams& params, const Prompt& prompt, std::span<const Response> responses);

// JSON: {"vocab": [...], "weights": [...], "bias": b, "feature_spec_version": 1}
void save_reward(const std::filesystem::path& path, const RewardParams& params);
RewardParams load_reward(const std::filesystem::path& path);

}  // namespace mdpo
