#include "mdpo/pipeline.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mdpo/dataset_io.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

using nlohmann::ordered_json;

void AugmentationConfig::validate() const {
  if (prompts_per_seed < 1 || responses_per_model < 1) {
    throw std::invalid_argument("augmentation: prompts_per_seed and responses_per_model must be >= 1");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("augmentation: temperature must be > 0");
  }
  if (policy_max_len < 1) {
    throw std::invalid_argument("augmentation: policy_max_len must be >= 1");
  }
}

AugmentedPrompts augment_prompts(std::span<const Prompt> seeds, GenBackend& backend, const Vocabulary& vocab,
                                 const AugmentationConfig& config) {
  config.validate();
  if (seeds.empty()) {
    throw std::invalid_argument("augment_prompts: no seed prompts");
  }
  const std::size_t k = config.prompts_per_seed;
  const std::size_t total = seeds.size() * k;

  std::vector<std::optional<std::string>> completed;
  std::vector<std::string> texts;
  try {
    texts = ordered_parallel_map<std::string>(
        total, config.max_in_flight,
        [&](std::size_t idx) {
          const auto& seed = seeds[idx / k];
          return backend.complete(render_augmentation_prompt(vocab.decode(seed.tokens())), config.temperature,
                                  derive_seed(config.seed, kStageAugmentPrompts, idx));
        },
        &completed);
  } catch (const std::exception& e) {
    std::ostringstream partial;
    for (std::size_t idx = 0; idx < completed.size(); ++idx) {
      if (completed[idx]) {
        ordered_json j;
        j["seed_id"] = seeds[idx / k].id();
        j["generation"] = idx % k;
        j["text"] = *completed[idx];
        partial << j.dump() << '\n';
      }
    }
    throw StageFailed(kStageAugmentPrompts, {}, e.what(), partial.str());
  }

  AugmentedPrompts out;
  out.generated = total;
  out.backend_calls = total;
  for (std::size_t idx = 0; idx < total; ++idx) {
    TokenSeq tokens;
    try {
      tokens = vocab.encode(texts[idx], true);
    } catch (const std::invalid_argument& e) {
      throw StageFailed(kStageAugmentPrompts, {}, e.what());
    }
    if (tokens.empty() || tokens.size() < config.min_prompt_tokens) {
      ++out.dropped;
      continue;
    }
    out.prompts.emplace_back(seeds[idx / k].id() + "-aug" + std::to_string(idx % k), std::move(tokens));
  }
  return out;
}

std::vector<PromptResponses> generate_responses(std::span<const Prompt> prompts, GenBackend& backend,
                                                const PolicyParams& policy, const Vocabulary& vocab,
                                                const AugmentationConfig& config, std::size_t* backend_calls) {
  config.validate();
  if (prompts.empty()) {
    throw std::invalid_argument("generate_responses: no prompts");
  }
  if (policy.vocab_size() != vocab.size()) {
    throw std::invalid_argument("generate_responses: policy vocabulary size does not match");
  }
  const std::size_t m = config.responses_per_model;
  const std::size_t total = prompts.size() * m;

  std::vector<std::optional<std::string>> completed;
  std::vector<std::string> texts;
  try {
    texts = ordered_parallel_map<std::string>(
        total, config.max_in_flight,
        [&](std::size_t idx) {
          return backend.complete(vocab.decode(prompts[idx / m].tokens()), config.temperature,
                                  derive_seed(config.seed, kStageGenerateResponses, idx));
        },
        &completed);
  } catch (const std::exception& e) {
    std::ostringstream partial;
    for (std::size_t idx = 0; idx < completed.size(); ++idx) {
      if (completed[idx]) {
        ordered_json j;
        j["id"] = prompts[idx / m].id();
        j["gen_index"] = idx % m;
        j["text"] = *completed[idx];
        partial << j.dump() << '\n';
      }
    }
    throw StageFailed(kStageGenerateResponses, {}, e.what(), partial.str());
  }
  if (backend_calls != nullptr) {
    *backend_calls = total;
  }

  std::vector<PromptResponses> out;
  out.reserve(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    PromptResponses item{prompts[p], {}};
    for (std::size_t j = 0; j < m; ++j) {
      TokenSeq tokens;
      try {
        tokens = vocab.encode(texts[p * m + j], true);
      } catch (const std::invalid_argument& e) {
        throw StageFailed(kStageGenerateResponses, {}, e.what());
      }
      if (tokens.empty()) {
        throw StageFailed(kStageGenerateResponses, {}, "backend returned an empty completion for " + prompts[p].id());
      }
      item.responses.emplace_back(std::move(tokens), ResponseSource::kGenBackend, static_cast<std::uint32_t>(j));
    }
    for (std::size_t j = 0; j < m; ++j) {
      auto sampled = sample_response(policy, prompts[p], config.temperature, config.policy_max_len,
                                     derive_seed(config.seed, "policy-responses", p * m + j));
      item.responses.emplace_back(sampled.tokens(), ResponseSource::kPolicy, static_cast<std::uint32_t>(m + j));
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<RankedExample> build_ranked_dataset(std::span<const PromptResponses> items, const Scorer& scorer) {
  std::vector<RankedExample> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    try {
      out.push_back(rank_responses(scorer, item.prompt, item.responses));
    } catch (const std::exception& e) {
      throw StageFailed(kStageRank, {}, item.prompt.id() + ": " + e.what());
    }
  }
  return out;
}

std::vector<RankedExample> build_seed_ranked_dataset(std::span<const PreferencePair> seeds, GenBackend& backend,
                                                     const Scorer& scorer, const Vocabulary& vocab,
                                                     const AugmentationConfig& config) {
  std::vector<PromptResponses> items;
  const std::size_t m = config.responses_per_model;
  std::size_t idx = 0;
  for (const auto& pair : seeds) {
    PromptResponses item{pair.prompt, {}};
    item.responses.emplace_back(pair.chosen.tokens(), ResponseSource::kSeedChosen, 0);
    item.responses.emplace_back(pair.rejected.tokens(), ResponseSource::kSeedRejected, 1);
    for (std::size_t j = 0; j < m; ++j, ++idx) {
      const auto text = backend.complete(vocab.decode(pair.prompt.tokens()), config.temperature,
                                         derive_seed(config.seed, "seed-responses", idx));
      auto tokens = vocab.encode(text, true);
      if (tokens.empty()) {
        throw StageFailed(kStageRank, {}, "backend returned an empty completion for " + pair.prompt.id());
      }
      item.responses.emplace_back(std::move(tokens), ResponseSource::kGenBackend, static_cast<std::uint32_t>(2 + j));
    }
    items.push_back(std::move(item));
  }
  return build_ranked_dataset(items, scorer);
}

std::string PipelineReport::to_json() const {
  ordered_json j;
  j["seed_prompts"] = seed_prompts;
  j["generated_prompts"] = generated_prompts;
  j["filtered_prompts"] = filtered_prompts;
  j["dropped_prompts"] = dropped_prompts;
  j["responses"] = responses;
  j["ranked_examples"] = ranked_examples;
  j["adjacent_pairs"] = adjacent_pairs;
  j["backend_calls"] = {{"prompts", prompt_backend_calls}, {"responses", response_backend_calls}};
  j["completed_stages"] = completed_stages;
  return j.dump(2) + "\n";
}

PipelineReport simulate_counts(std::size_t seed_count, const AugmentationConfig& config, std::size_t dropped) {
  config.validate();
  PipelineReport r;
  r.seed_prompts = seed_count;
  r.generated_prompts = seed_count * config.prompts_per_seed;
  if (dropped > r.generated_prompts) {
    throw std::invalid_argument("simulate_counts: more prompts dropped than generated");
  }
  r.dropped_prompts = dropped;
  r.filtered_prompts = r.generated_prompts - dropped;
  const std::size_t n = 2 * config.responses_per_model;
  r.responses = r.filtered_prompts * n;
  r.ranked_examples = r.filtered_prompts;
  r.adjacent_pairs = r.ranked_examples * (n - 1);
  r.prompt_backend_calls = r.generated_prompts;
  r.response_backend_calls = r.filtered_prompts * config.responses_per_model;
  return r;
}

namespace {

void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& completed,
                    const std::string& failed = {}) {
  ordered_json j;
  j["completed_stages"] = completed;
  if (!failed.empty()) {
    j["failed_stage"] = failed;
  }
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

std::string responses_to_jsonl(std::span<const PromptResponses> items, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const auto& item : items) {
    ordered_json j;
    j["id"] = item.prompt.id();
    j["prompt"] = vocab.decode(item.prompt.tokens());
    auto texts = ordered_json::array();
    auto sources = ordered_json::array();
    auto gen_index = ordered_json::array();
    for (const auto& r : item.responses) {
      texts.push_back(vocab.decode(r.tokens()));
      sources.push_back(std::string(to_string(r.source())));
      gen_index.push_back(r.gen_index());
    }
    j["responses"] = std::move(texts);
    j["sources"] = std::move(sources);
    j["gen_index"] = std::move(gen_index);
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace

PipelineReport run_pipeline(const std::filesystem::path& seed_pairs_path, const std::filesystem::path& out_dir,
                            const PipelineConfig& config, const PipelineBackends& backends, bool force) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  config.augmentation.validate();
  if (backends.prompt_backend == nullptr || backends.response_backend == nullptr) {
    throw std::invalid_argument("run_pipeline: prompt and response backends are required");
  }
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw RefusalError("output directory " + out_dir.string() + " is not empty; pass --force to overwrite");
  }

  const Vocabulary vocab = config.vocab.empty() ? vocabulary_from_pairs_file(seed_pairs_path) : Vocabulary(config.vocab);
  const auto seeds = read_pairs(seed_pairs_path, vocab);
  if (seeds.empty()) {
    throw std::invalid_argument("seed file " + seed_pairs_path.string() + " has no pairs");
  }
  fs::create_directories(out_dir);
  write_vocabulary(out_dir / "vocab.json", vocab);

  PipelineReport report;
  report.seed_prompts = seeds.size();
  auto fail = [&](const StageFailed& e) -> StageFailed {
    if (!e.partial_jsonl().empty()) {
      write_text_file(out_dir / (e.stage() + ".partial.jsonl"), e.partial_jsonl());
    }
    write_manifest(out_dir, report.completed_stages, e.stage());
    return StageFailed(e.stage(), report.completed_stages, e.what(), e.partial_jsonl());
  };
  auto complete_stage = [&](const char* stage) {
    report.completed_stages.emplace_back(stage);
    write_manifest(out_dir, report.completed_stages);
  };
  auto guarded = [&](const char* stage, const auto& body) {
    try {
      body();
    } catch (const StageFailed& e) {
      throw fail(e);
    } catch (const std::exception& e) {
      throw fail(StageFailed(stage, {}, e.what()));
    }
    complete_stage(stage);
  };

  // 1. prompt augmentation
  std::vector<Prompt> seed_prompts;
  for (const auto& p : seeds) {
    seed_prompts.push_back(p.prompt);
  }
  AugmentedPrompts augmented;
  guarded(kStageAugmentPrompts, [&] {
    augmented = augment_prompts(seed_prompts, *backends.prompt_backend, vocab, config.augmentation);
    report.generated_prompts = augmented.generated;
    report.filtered_prompts = augmented.prompts.size();
    report.dropped_prompts = augmented.dropped;
    report.prompt_backend_calls = augmented.backend_calls;
    if (augmented.prompts.empty()) {
      throw std::runtime_error("every generated prompt was shorter than min_prompt_tokens");
    }
    write_prompts(out_dir / "prompts.jsonl", augmented.prompts, vocab);
  });

  // 2. response generation
  std::vector<PromptResponses> generated;
  guarded(kStageGenerateResponses, [&] {
    const PolicyParams uniform(vocab.size(), config.augmentation.policy_max_len);
    const PolicyParams& policy = backends.policy != nullptr ? *backends.policy : uniform;
    generated = generate_responses(augmented.prompts, *backends.response_backend, policy, vocab, config.augmentation,
                                   &report.response_backend_calls);
    for (const auto& item : generated) {
      report.responses += item.responses.size();
    }
    write_text_file(out_dir / "responses.jsonl", responses_to_jsonl(generated, vocab));
  });

  // 3. reward model
  std::optional<LinearScorer> trained;
  guarded(kStageRewardModel, [&] {
    if (backends.scorer == nullptr) {
      auto fit = train_bt(vocab, seeds, config.reward);
      save_reward(out_dir / "reward_model.json", fit.params);
      trained.emplace(std::move(fit.params));
    }
  });
  const Scorer& scorer = backends.scorer != nullptr ? *backends.scorer : *trained;

  // 4. rating and ranked-dataset emission
  guarded(kStageRank, [&] {
    const auto ranked = build_ranked_dataset(generated, scorer);
    report.ranked_examples = ranked.size();
    report.adjacent_pairs = ranked.size() * (2 * config.augmentation.responses_per_model - 1);
    write_ranked(out_dir / "ranked.jsonl", ranked, vocab);
    if (config.emit_seed_ranked) {
      const auto seed_ranked =
          build_seed_ranked_dataset(seeds, *backends.response_backend, scorer, vocab, config.augmentation);
      write_ranked(out_dir / "seed_ranked.jsonl", seed_ranked, vocab);
    }
  });

  write_text_file(out_dir / "report.json", report.to_json());
  report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mdpo
