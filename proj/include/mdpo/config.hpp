#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "mdpo/backends.hpp"
#include "mdpo/eval.hpp"
#include "mdpo/pipeline.hpp"
#include "mdpo/reward_model.hpp"
#include "mdpo/trainer.hpp"

namespace mdpo {

// Run configuration file (JSON). Every key is optional except
// "schema_version"; unknown keys are rejected. Everything that affects
// numerics lives here so a run is reproduced from its config file alone.

inline constexpr int kRunConfigSchemaVersion = 1;

struct BackendSpec {
  /// "scripted" or "http".
  std::string kind = "scripted";
  ScriptedBackendConfig scripted;
  HttpEndpointConfig http;
};

struct ScorerSpec {
  /// "trained" (fit on the seed pairs), "file" (a saved reward model) or
  /// "http".
  std::string kind = "trained";
  std::string path;
  HttpEndpointConfig http;
};

/// Train keys present in the file; applied on top of the chosen preset.
struct TrainOverrides {
  std::optional<TrainMethod> method;
  std::optional<double> beta;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<OptimizerKind> optimizer;
  std::optional<double> adam_beta1;
  std::optional<double> adam_beta2;
  std::optional<double> adam_eps;
};

struct EvalSpec {
  SamplingConfig sampling;
  double beta = Beta::kDefault;
  /// "reward" (ground-truth reward file) or "http" (LLM judge).
  std::string judge = "reward";
  HttpEndpointConfig judge_http;
};

struct RunConfig {
  int schema_version = kRunConfigSchemaVersion;
  /// Root seed. Each command derives its stream seeds from it.
  std::uint64_t seed = 0;
  PipelineConfig pipeline;
  BackendSpec prompt_backend;
  BackendSpec response_backend;
  ScorerSpec scorer;
  TrainOverrides train;
  /// Standard deviation of the initial policy logits; 0 = uniform policy.
  double policy_init_scale = 0.0;
  std::uint32_t policy_max_len = PolicyParams::kDefaultMaxLen;
  EvalSpec eval;

  /// Preset ("desk" or "paper") with the file's train keys applied and the
  /// seed derived from the root seed.
  TrainConfig train_config(std::string_view preset) const;
};

/// Throws std::invalid_argument naming the offending key.
RunConfig parse_run_config(std::string_view json_text);
/// Throws std::invalid_argument naming the path when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);

/// The defaults as a config document.
std::string default_run_config_json();

}  // namespace mdpo
