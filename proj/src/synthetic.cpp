#include "mdpo/synthetic.hpp"

#include <stdexcept>

#include "mdpo/eval.hpp"
#include "mdpo/losses.hpp"

namespace mdpo {

Vocabulary synthetic_vocabulary(std::size_t count) {
  std::vector<std::string> words;
  words.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    words.push_back("w" + std::to_string(i));
  }
  return Vocabulary(std::move(words));
}

TokenSeq random_tokens(const Vocabulary& vocab, std::size_t min_len, std::size_t max_len, Rng& rng) {
  if (min_len == 0 || max_len < min_len || vocab.size() < 2) {
    throw std::invalid_argument("random_tokens: need 1 <= min_len <= max_len and a non-empty word list");
  }
  const std::size_t len = min_len + rng.index(max_len - min_len + 1);
  TokenSeq out(len);
  for (auto& t : out) {
    t = static_cast<TokenId>(rng.index(vocab.size() - 1));  // the last id is the end-of-sequence token
  }
  return out;
}

std::vector<Prompt> random_prompts(const Vocabulary& vocab, std::size_t count, std::size_t min_len,
                                   std::size_t max_len, std::uint64_t seed, const std::string& id_prefix) {
  Rng rng(seed);
  std::vector<Prompt> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(id_prefix + std::to_string(i), random_tokens(vocab, min_len, max_len, rng));
  }
  return out;
}

RewardParams planted_reward(const Vocabulary& vocab, double scale, std::uint64_t seed) {
  Rng rng(seed);
  auto params = RewardParams::zeros(vocab);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    params.weights[i] = scale * rng.normal();
  }
  return params;
}

std::vector<PreferencePair> planted_pairs(const RewardParams& planted, std::size_t count, std::uint64_t seed,
                                          const std::string& id_prefix) {
  Rng rng(seed);
  std::vector<PreferencePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Prompt prompt(id_prefix + std::to_string(i), random_tokens(planted.vocab, 2, 6, rng));
    Response a(random_tokens(planted.vocab, 1, 8, rng), ResponseSource::kGenBackend, 0);
    Response b(random_tokens(planted.vocab, 1, 8, rng), ResponseSource::kGenBackend, 1);
    const double p = bt_probability(score(planted, prompt, a).value, score(planted, prompt, b).value);
    if (rng.uniform() < p) {
      out.emplace_back(std::move(prompt), std::move(a), std::move(b));
    } else {
      out.emplace_back(std::move(prompt), std::move(b), std::move(a));
    }
  }
  return out;
}

std::vector<RankedExample> planted_ranked(const PolicyParams& policy, const std::vector<Prompt>& prompts,
                                          const RewardParams& planted, std::size_t n, double temperature,
                                          std::uint32_t max_len, std::uint64_t seed) {
  const LinearScorer scorer(planted);
  std::vector<RankedExample> out;
  out.reserve(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    std::vector<Response> responses;
    for (std::size_t j = 0; j < n; ++j) {
      auto r = sample_response(policy, prompts[p], temperature, max_len, derive_seed(seed, "ranked", p * n + j));
      responses.emplace_back(r.tokens(), ResponseSource::kPolicy, static_cast<std::uint32_t>(j));
    }
    out.push_back(rank_responses(scorer, prompts[p], responses));
  }
  return out;
}

double pairwise_agreement(const RewardParams& learned, const RewardParams& planted,
                          const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("pairwise_agreement: no pairs");
  }
  std::size_t agree = 0;
  for (const auto& pair : pairs) {
    const double dt = score(planted, pair.prompt, pair.chosen).value - score(planted, pair.prompt, pair.rejected).value;
    const double dl = score(learned, pair.prompt, pair.chosen).value - score(learned, pair.prompt, pair.rejected).value;
    if ((dt > 0 && dl > 0) || (dt < 0 && dl < 0) || (dt == 0 && dl == 0)) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

PlantedExperimentResult run_planted_experiment(const PlantedExperimentConfig& config, std::uint64_t seed) {
  const auto vocab = synthetic_vocabulary(config.vocab_words);
  const auto planted = planted_reward(vocab, config.planted_scale, derive_seed(seed, "planted"));
  const auto reference =
      PolicyParams::random(vocab.size(), config.reference_scale, derive_seed(seed, "reference"), config.max_len);

  const auto train_prompts = random_prompts(vocab, config.train_examples, 2, 6, derive_seed(seed, "train-prompts"), "t");
  const auto ranked = planted_ranked(reference, train_prompts, planted, config.n, 1.0, config.max_len,
                                     derive_seed(seed, "train-responses"));
  const auto heldout_prompts =
      random_prompts(vocab, config.heldout_examples, 2, 6, derive_seed(seed, "heldout-prompts"), "h");
  const auto heldout = planted_ranked(reference, heldout_prompts, planted, config.n, 1.0, config.max_len,
                                      derive_seed(seed, "heldout-responses"));
  const auto eval_prompts = random_prompts(vocab, config.eval_prompts, 2, 6, derive_seed(seed, "eval-prompts"), "e");

  const RewardJudge judge(planted);
  const SamplingConfig sampling{1.0, config.max_len, derive_seed(seed, "eval-sampling"), 1000};

  auto evaluate = [&](const TrainResult& trained) {
    PlantedMethodResult r;
    r.win_rate_vs_reference = head_to_head(trained.params, reference, eval_prompts, judge, sampling).win_rate;
    r.ranking_accuracy = ranking_accuracy(trained.params, reference, config.train.beta, heldout);
    r.final_loss = trained.trace.steps.empty() ? 0.0 : trained.trace.steps.back().mean_loss;
    return r;
  };

  PlantedExperimentResult result;
  TrainConfig mdpo_cfg = config.train;
  mdpo_cfg.method = TrainMethod::kMdpo;
  mdpo_cfg.seed = derive_seed(seed, "train");
  result.mdpo = evaluate(train(TrainingData{{}, ranked}, reference, mdpo_cfg));

  TrainingData pair_data;
  for (const auto& ex : ranked) {
    pair_data.pairs.push_back(extreme_pair(ex));
  }
  TrainConfig dpo_cfg = mdpo_cfg;
  dpo_cfg.method = TrainMethod::kDpo;
  result.dpo = evaluate(train(pair_data, reference, dpo_cfg));
  return result;
}

}  // namespace mdpo
