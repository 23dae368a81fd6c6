#include "mdpo/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdpo {

Beta::Beta(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("beta must be positive and finite, got " + std::to_string(value));
  }
}

double implicit_reward(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const Prompt& prompt,
                       const Response& response) {
  return beta.value() * (log_prob_value(theta, prompt, response) - log_prob_value(ref, prompt, response));
}

MarginLoss negative_log_sigmoid(double margin) noexcept {
  return {-log_sigmoid(margin), -sigmoid(-margin)};
}

double weighted_margin(Beta beta, std::span<const double> weights, std::span<const double> log_ratios) {
  if (weights.size() != log_ratios.size()) {
    throw std::invalid_argument("weighted_margin: weights and log-ratios differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i] * log_ratios[i];
  }
  return beta.value() * acc;
}

LossValue dpo_loss(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const PreferencePair& pair) {
  const auto chosen = log_prob(theta, pair.prompt, pair.chosen);
  const auto rejected = log_prob(theta, pair.prompt, pair.rejected);
  const double ratio_w = chosen.logprob - log_prob_value(ref, pair.prompt, pair.chosen);
  const double ratio_l = rejected.logprob - log_prob_value(ref, pair.prompt, pair.rejected);

  LossValue out;
  out.inner_margin = beta.value() * (ratio_w - ratio_l);
  const auto nls = negative_log_sigmoid(out.inner_margin);
  out.loss = nls.loss;
  const double scale = nls.dloss_dmargin * beta.value();
  out.grad.add_scaled(chosen.grad, scale);
  out.grad.add_scaled(rejected.grad, -scale);
  return out;
}

LossValue mdpo_loss(const PolicyParams& theta, const PolicyParams& ref, Beta beta, const RankedExample& example) {
  const std::size_t n = example.n();
  const auto schedule = coefficients(n);
  std::vector<LogProbResult> policy_terms;
  std::vector<double> ratios(n);
  policy_terms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& y = example.responses()[i];
    policy_terms.push_back(log_prob(theta, example.prompt(), y));
    ratios[i] = policy_terms.back().logprob - log_prob_value(ref, example.prompt(), y);
  }

  LossValue out;
  out.inner_margin = weighted_margin(beta, schedule.weights(), ratios);
  const auto nls = negative_log_sigmoid(out.inner_margin);
  out.loss = nls.loss;
  const double scale = nls.dloss_dmargin * beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    if (schedule[i] != 0.0) {
      out.grad.add_scaled(policy_terms[i].grad, scale * schedule[i]);
    }
  }
  return out;
}

AllPairsResult allpairs_margin_oracle(std::span<const double> ratios) {
  const std::size_t n = ratios.size();
  if (n < 2) {
    throw std::invalid_argument("allpairs_margin_oracle: need at least 2 ratios");
  }
  AllPairsResult out;
  out.aggregated.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      out.margin += ratios[i] - ratios[k];
      out.aggregated[i] += 1.0;
      out.aggregated[k] -= 1.0;
      ++out.comparisons;
    }
  }
  return out;
}

std::vector<PreferencePair> expand_adjacent_pairs(const RankedExample& example) {
  std::vector<PreferencePair> pairs;
  pairs.reserve(example.n() - 1);
  for (std::size_t i = 0; i + 1 < example.n(); ++i) {
    pairs.emplace_back(example.prompt(), example.responses()[i], example.responses()[i + 1]);
  }
  return pairs;
}

std::vector<PreferencePair> expand_adjacent_pairs(std::span<const RankedExample> examples) {
  std::vector<PreferencePair> pairs;
  for (const auto& ex : examples) {
    auto part = expand_adjacent_pairs(ex);
    pairs.insert(pairs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return pairs;
}

PreferencePair extreme_pair(const RankedExample& example) {
  return PreferencePair(example.prompt(), example.responses().front(), example.responses().back());
}

}  // namespace mdpo
