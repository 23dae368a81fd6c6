#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdpo/core.hpp"
#include "mdpo/reward_model.hpp"

namespace mdpo {

/// Text-completion model used for prompt and response generation.
/// Implementations must be safe to call from several threads at once.
class GenBackend {
 public:
  virtual ~GenBackend() = default;
  /// Throws BackendError when the completion cannot be produced.
  virtual std::string complete(const std::string& prompt_text, double temperature, std::uint64_t seed) = 0;
};

/// Prompt-augmentation template (asset version 1). The "{}" slot takes one
/// seed instruction.
std::string_view prompt_augmentation_template();
std::string render_augmentation_prompt(std::string_view seed_instruction);
/// The instruction spliced into a rendered template, if `text` is one.
std::optional<std::string> extract_seed_instruction(std::string_view text);

struct ScriptedBackendConfig {
  /// Words the backend may emit. Should be a subset of the pipeline
  /// vocabulary.
  std::vector<std::string> words;
  std::size_t min_response_tokens = 3;
  std::size_t max_response_tokens = 12;
  /// Fraction of augmented prompts that come back too short (1-3 tokens).
  double short_prompt_rate = 0.05;
  /// Exact-match replies; checked before anything is synthesized.
  std::map<std::string, std::string> canned;
};

/// Hermetic stand-in for a generation model. Output is a pure function of
/// (prompt text, seed). Prompts built from the augmentation template get a
/// new instruction that reuses words of the embedded seed instruction; any
/// other prompt gets a random response over `words`.
class ScriptedBackend final : public GenBackend {
 public:
  explicit ScriptedBackend(ScriptedBackendConfig config);
  std::string complete(const std::string& prompt_text, double temperature, std::uint64_t seed) override;

 private:
  ScriptedBackendConfig config_;
};

/// Exponential backoff schedule: delay(k) = min(initial * multiplier^k, max).
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};

  std::chrono::milliseconds delay(int retry_index) const;
};

struct HttpEndpointConfig {
  /// Full URL, e.g. "https://api.example.com/v1/chat/completions".
  std::string url;
  std::string model;
  /// Name of the environment variable holding the bearer token; empty for
  /// no authentication.
  std::string auth_env;
  std::chrono::seconds timeout{30};
  RetryPolicy retry;
};

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};
/// Throws std::invalid_argument unless `url` is http(s)://host[:port][/path].
SplitUrl split_url(std::string_view url);

using SleepFn = std::function<void(std::chrono::milliseconds)>;

/// POSTs `body` as JSON, retrying transport errors, 429 and 5xx responses.
/// Other statuses fail immediately. Returns the response body.
std::string post_json_with_retry(const HttpEndpointConfig& config, const std::string& body, const SleepFn& sleep,
                                 std::atomic<std::size_t>* attempts = nullptr);

/// Chat-completion adapter. Request: {"model", "messages": [{"role": "user",
/// "content"}], "temperature", "seed"}; reply text is
/// choices[0].message.content.
class HttpBackend final : public GenBackend {
 public:
  explicit HttpBackend(HttpEndpointConfig config, SleepFn sleep = {});
  std::string complete(const std::string& prompt_text, double temperature, std::uint64_t seed) override;
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  HttpEndpointConfig config_;
  SleepFn sleep_;
  std::atomic<std::size_t> attempts_{0};
};

/// External reward service: POST {"prompt", "response"} -> {"reward": x}.
class HttpScorer final : public Scorer {
 public:
  HttpScorer(HttpEndpointConfig config, Vocabulary vocab, SleepFn sleep = {});
  double score(const Prompt& prompt, const Response& response) const override;

 private:
  HttpEndpointConfig config_;
  Vocabulary vocab_;
  SleepFn sleep_;
};

}  // namespace mdpo
