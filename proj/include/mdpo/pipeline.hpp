#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdpo/backends.hpp"
#include "mdpo/core.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/reward_model.hpp"

namespace mdpo {

struct AugmentationConfig {
  std::size_t prompts_per_seed = 3;
  std::size_t responses_per_model = 2;
  double temperature = 1.0;
  /// Generated prompts with fewer tokens are dropped.
  std::size_t min_prompt_tokens = 8;
  std::uint64_t seed = 0;
  /// Concurrent backend calls per stage.
  std::size_t max_in_flight = 4;
  /// Length cap for responses sampled from the policy.
  std::uint32_t policy_max_len = PolicyParams::kDefaultMaxLen;

  /// Throws std::invalid_argument on zero counts or a non-positive temperature.
  void validate() const;
};

// Stage names, in execution order.
inline constexpr const char* kStageAugmentPrompts = "augment-prompts";
inline constexpr const char* kStageGenerateResponses = "generate-responses";
inline constexpr const char* kStageRewardModel = "reward-model";
inline constexpr const char* kStageRank = "rank";

struct AugmentedPrompts {
  std::vector<Prompt> prompts;  // survivors, in (seed, generation index) order
  std::size_t generated = 0;
  std::size_t dropped = 0;
  std::size_t backend_calls = 0;
};

/// Stage 1. For every seed, `prompts_per_seed` backend calls on the
/// augmentation template, then the short-prompt filter. Generated words
/// outside `vocab` map to "<unk>" when the vocabulary has it; otherwise the
/// stage fails. Throws StageFailed carrying the completed prompts as JSONL.
AugmentedPrompts augment_prompts(std::span<const Prompt> seeds, GenBackend& backend, const Vocabulary& vocab,
                                 const AugmentationConfig& config);

struct PromptResponses {
  Prompt prompt;
  std::vector<Response> responses;  // gen_index 0..2m-1: backend first, then policy
};

/// Stage 2. `responses_per_model` completions from the backend and as many
/// samples from the policy for each prompt.
std::vector<PromptResponses> generate_responses(std::span<const Prompt> prompts, GenBackend& backend,
                                                const PolicyParams& policy, const Vocabulary& vocab,
                                                const AugmentationConfig& config,
                                                std::size_t* backend_calls = nullptr);

/// Stage 4 (rating): rank every prompt's responses with `scorer`.
std::vector<RankedExample> build_ranked_dataset(std::span<const PromptResponses> items, const Scorer& scorer);

/// Seed prompts with their human pair plus `responses_per_model` backend
/// completions, ranked by `scorer` (the 4-response seed dataset variant).
std::vector<RankedExample> build_seed_ranked_dataset(std::span<const PreferencePair> seeds, GenBackend& backend,
                                                     const Scorer& scorer, const Vocabulary& vocab,
                                                     const AugmentationConfig& config);

struct PipelineReport {
  std::size_t seed_prompts = 0;
  std::size_t generated_prompts = 0;
  std::size_t filtered_prompts = 0;  // prompts kept after the length filter
  std::size_t dropped_prompts = 0;
  std::size_t responses = 0;
  std::size_t ranked_examples = 0;
  std::size_t adjacent_pairs = 0;  // ranked_examples * (n - 1)
  std::size_t prompt_backend_calls = 0;
  std::size_t response_backend_calls = 0;
  std::vector<std::string> completed_stages;
  double elapsed_seconds = 0.0;

  /// Everything except elapsed time, so the file is reproducible.
  std::string to_json() const;
};

/// Stage counts implied by the contract for `seed_count` seeds of which
/// `dropped` generated prompts fail the length filter.
PipelineReport simulate_counts(std::size_t seed_count, const AugmentationConfig& config, std::size_t dropped);

struct PipelineConfig {
  AugmentationConfig augmentation;
  /// Vocabulary words; empty means derive from the seed file.
  std::vector<std::string> vocab;
  BtTrainConfig reward;
  /// Also write seed_ranked.jsonl (seed prompts with 2 + responses_per_model
  /// ranked responses).
  bool emit_seed_ranked = false;
};

struct PipelineBackends {
  GenBackend* prompt_backend = nullptr;
  GenBackend* response_backend = nullptr;
  /// Response-generating policy. Defaults to a uniform policy over the
  /// pipeline vocabulary.
  const PolicyParams* policy = nullptr;
  /// Pretrained or external scorer. When null, a reward model is trained on
  /// the seed pairs and written to reward_model.json.
  const Scorer* scorer = nullptr;
};

/// Runs all four stages, writing vocab.json, prompts.jsonl, responses.jsonl,
/// reward_model.json, ranked.jsonl, report.json and manifest.json into
/// `out_dir`. Throws RefusalError if `out_dir` is non-empty and `force` is
/// false; StageFailed (after writing manifest.json and a partial file) when a
/// stage fails.
PipelineReport run_pipeline(const std::filesystem::path& seed_pairs_path, const std::filesystem::path& out_dir,
                            const PipelineConfig& config, const PipelineBackends& backends, bool force = false);

/// Runs fn(0..count-1) with at most `max_in_flight` concurrent calls and
/// returns results by index. If any call throws, the first failure by index
/// is rethrown after all calls finish; `completed` then holds every result
/// that did finish.
template <typename T>
std::vector<T> ordered_parallel_map(std::size_t count, std::size_t max_in_flight,
                                    const std::function<T(std::size_t)>& fn,
                                    std::vector<std::optional<T>>* completed = nullptr);

}  // namespace mdpo

#include "mdpo/detail/ordered_parallel_map.hpp"
