#pragma once

#include <span>
#include <vector>

#include "mdpo/core.hpp"
#include "mdpo/policy.hpp"

namespace mdpo {

/// KL-strength / implicit-reward temperature. Must be positive and finite.
class Beta {
 public:
  static constexpr double kDefault = 0.1;

  explicit Beta(double value = kDefault);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// A negative-log-sigmoid objective: loss = -log sigma(inner_margin).
/// `grad` is d loss / d theta.
struct LossValue {
  double loss = 0.0;
  double inner_margin = 0.0;
  SparseGrad grad;
};

/// beta * (log pi_theta(y|x) - log pi_ref(y|x)). The log Z(x) term is left out;
/// it cancels in every difference of rewards for the same prompt.
double implicit_reward(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const Prompt& prompt,
                       const Response& response);

/// Standard DPO on one pair, negated for minimization.
LossValue dpo_loss(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const PreferencePair& pair);

/// Multi-response DPO: -log sigma(beta * sum_i w_i * (log pi_theta(y_i|x) - log pi_ref(y_i|x)))
/// with w = coefficients(n). For n = 2 this is exactly dpo_loss.
LossValue mdpo_loss(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const RankedExample& example);

/// beta * sum_i weights[i] * log_ratios[i]. The policy-free core of mdpo_loss.
double weighted_margin(Beta beta, std::span<const double> weights, std::span<const double> log_ratios);

/// -log sigma(margin) and its derivative with respect to the margin.
struct MarginLoss {
  double loss;
  double dloss_dmargin;
};
MarginLoss negative_log_sigmoid(double margin) noexcept;

/// Result of enumerating every ordered comparison (i < k) of a ranking.
struct AllPairsResult {
  double margin = 0.0;                   // sum_{i<k} (ratios[i] - ratios[k])
  std::vector<double> aggregated;        // net count of +/- appearances per index
  std::size_t comparisons = 0;           // n(n-1)/2
};

/// Brute-force check of the weight derivation: enumerates all i<k pairs
/// explicitly, never using coefficients(). Throws std::invalid_argument for
/// n < 2.
AllPairsResult allpairs_margin_oracle(std::span<const double> ratios);

/// The n-1 adjacent (rank i, rank i+1) pairs of a ranked example, in order.
std::vector<PreferencePair> expand_adjacent_pairs(const RankedExample& example);

std::vector<PreferencePair> expand_adjacent_pairs(std::span<const RankedExample> examples);

/// (rank 1, rank n) pair: the best-versus-worst DPO dataset built from a
/// ranked example.
PreferencePair extreme_pair(const RankedExample& example);

}  // namespace mdpo
