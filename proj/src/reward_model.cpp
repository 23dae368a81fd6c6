#include "mdpo/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "mdpo/errors.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

std::size_t feature_count(std::size_t vocab_size) noexcept { return vocab_size + 2; }

std::vector<double> reward_features(std::size_t vocab_size, const Prompt& prompt, const Response& response) {
  std::vector<double> f(feature_count(vocab_size), 0.0);
  std::unordered_set<TokenId> prompt_tokens;
  for (TokenId t : prompt.tokens()) {
    if (t >= vocab_size) {
      throw std::invalid_argument("reward features: prompt token out of vocabulary");
    }
    prompt_tokens.insert(t);
  }
  double overlap = 0.0;
  for (TokenId t : response.tokens()) {
    if (t >= vocab_size) {
      throw std::invalid_argument("reward features: response token out of vocabulary");
    }
    f[t] += 1.0;
    if (prompt_tokens.contains(t)) {
      overlap += 1.0;
    }
  }
  f[vocab_size] = static_cast<double>(response.size());
  f[vocab_size + 1] = overlap;
  return f;
}

RewardParams RewardParams::zeros(Vocabulary vocab) {
  RewardParams p{std::move(vocab), {}, 0.0};
  p.weights.assign(feature_count(p.vocab.size()), 0.0);
  return p;
}

void RewardParams::validate() const {
  if (weights.size() != feature_count(vocab.size())) {
    throw std::invalid_argument("reward params: expected " + std::to_string(feature_count(vocab.size())) +
                                " weights, got " + std::to_string(weights.size()));
  }
  if (!std::isfinite(bias) || !std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); })) {
    throw std::invalid_argument("reward params: non-finite value");
  }
}

RewardScore score(const RewardParams& params, const Prompt& prompt, const Response& response) {
  const auto f = reward_features(params.vocab.size(), prompt, response);
  if (f.size() != params.weights.size()) {
    throw std::invalid_argument("score: weight vector does not match feature basis");
  }
  return {std::inner_product(f.begin(), f.end(), params.weights.begin(), 0.0) + params.bias};
}

double LinearScorer::score(const Prompt& prompt, const Response& response) const {
  return mdpo::score(params_, prompt, response).value;
}

BtObjective bt_objective(const RewardParams& params, std::span<const PreferencePair> pairs, double l2) {
  BtObjective out;
  out.grad_weights.assign(params.weights.size(), 0.0);
  if (pairs.empty()) {
    throw std::invalid_argument("bt_objective: no pairs");
  }
  const std::size_t v = params.vocab.size();
  for (const auto& pair : pairs) {
    const auto fw = reward_features(v, pair.prompt, pair.chosen);
    const auto fl = reward_features(v, pair.prompt, pair.rejected);
    double margin = 0.0;
    for (std::size_t k = 0; k < fw.size(); ++k) {
      margin += params.weights[k] * (fw[k] - fl[k]);
    }
    // The bias cancels inside the margin, so its gradient is identically zero.
    out.loss += -log_sigmoid(margin);
    const double g = -sigmoid(-margin);
    for (std::size_t k = 0; k < fw.size(); ++k) {
      out.grad_weights[k] += g * (fw[k] - fl[k]);
    }
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  out.loss *= inv;
  for (std::size_t k = 0; k < out.grad_weights.size(); ++k) {
    out.grad_weights[k] = out.grad_weights[k] * inv + 2.0 * l2 * params.weights[k];
    out.loss += l2 * params.weights[k] * params.weights[k];
  }
  return out;
}

BtFit train_bt(const Vocabulary& vocab, std::span<const PreferencePair> pairs, const BtTrainConfig& config) {
  if (pairs.empty()) {
    throw std::invalid_argument("train_bt: need at least one pair");
  }
  if (!(config.lr > 0.0)) {
    throw std::invalid_argument("train_bt: lr must be > 0");
  }
  if (config.epochs < 0 || config.l2 < 0.0) {
    throw std::invalid_argument("train_bt: epochs and l2 must be non-negative");
  }
  BtFit fit{RewardParams::zeros(vocab), {}};
  if (config.init_scale > 0.0) {
    Rng rng(derive_seed(config.seed, "reward-init"));
    for (double& w : fit.params.weights) {
      w = config.init_scale * rng.normal();
    }
  }

  int rising = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto obj = bt_objective(fit.params, pairs, config.l2);
    if (!fit.loss_trace.empty()) {
      rising = obj.loss > fit.loss_trace.back() ? rising + 1 : 0;
      if (rising >= 3 || !std::isfinite(obj.loss)) {
        throw TrainingDiverged("reward model training diverged at epoch " + std::to_string(epoch) +
                               " (loss " + std::to_string(obj.loss) + "); retry with a smaller lr");
      }
    }
    fit.loss_trace.push_back(obj.loss);
    for (std::size_t k = 0; k < fit.params.weights.size(); ++k) {
      fit.params.weights[k] -= config.lr * obj.grad_weights[k];
    }
  }
  fit.loss_trace.push_back(bt_objective(fit.params, pairs, config.l2).loss);
  return fit;
}

RankedExample rank_responses(const Scorer& scorer, const Prompt& prompt, std::span<const Response> responses) {
  if (responses.size() < 2) {
    throw std::invalid_argument("rank_responses: need at least 2 responses");
  }
  std::vector<double> scores(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    scores[i] = scorer.score(prompt, responses[i]);
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("rank_responses: scorer returned a non-finite value");
    }
  }
  std::vector<std::size_t> order(responses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) {
      return scores[a] > scores[b];
    }
    return responses[a].gen_index() < responses[b].gen_index();
  });
  std::vector<Response> ranked;
  std::vector<double> rewards;
  ranked.reserve(order.size());
  rewards.reserve(order.size());
  for (std::size_t i : order) {
    ranked.push_back(responses[i]);
    rewards.push_back(scores[i]);
  }
  return RankedExample(prompt, std::move(ranked), std::move(rewards));
}

RankedExample rank_responses(const RewardParams& params, const Prompt& prompt, std::span<const Response> responses) {
  return rank_responses(LinearScorer(params), prompt, responses);
}

void save_reward(const std::filesystem::path& path, const RewardParams& params) {
  params.validate();
  nlohmann::json j;
  j["vocab"] = params.vocab.user_words();
  j["weights"] = params.weights;
  j["bias"] = params.bias;
  j["feature_spec_version"] = kFeatureSpecVersion;
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write reward model " + path.string());
  }
  out << j.dump(2) << '\n';
}

RewardParams load_reward(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot read reward model " + path.string());
  }
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("feature_spec_version").get<int>() != kFeatureSpecVersion) {
      throw std::invalid_argument("unsupported feature_spec_version");
    }
    RewardParams p{Vocabulary(j.at("vocab").get<std::vector<std::string>>()),
                   j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("reward model " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("reward model " + path.string() + ": " + e.what());
  }
}

}  // namespace mdpo
