#include "mdpo/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mdpo/errors.hpp"
#include "mdpo/generated/prompt_template.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

std::string_view prompt_augmentation_template() { return generated::kPromptAugmentationTemplate; }

namespace {

constexpr std::string_view kSlot = "{}";

std::pair<std::string_view, std::string_view> template_parts() {
  const auto t = prompt_augmentation_template();
  const auto at = t.find(kSlot);
  return {t.substr(0, at), t.substr(at + kSlot.size())};
}

}  // namespace

std::string render_augmentation_prompt(std::string_view seed_instruction) {
  const auto [prefix, suffix] = template_parts();
  std::string out;
  out.reserve(prefix.size() + seed_instruction.size() + suffix.size());
  out.append(prefix).append(seed_instruction).append(suffix);
  return out;
}

std::optional<std::string> extract_seed_instruction(std::string_view text) {
  const auto [prefix, suffix] = template_parts();
  if (text.size() < prefix.size() + suffix.size() || !text.starts_with(prefix) || !text.ends_with(suffix)) {
    return std::nullopt;
  }
  return std::string(text.substr(prefix.size(), text.size() - prefix.size() - suffix.size()));
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(ScriptedBackendConfig config) : config_(std::move(config)) {
  if (config_.words.empty()) {
    throw std::invalid_argument("scripted backend: word list is empty");
  }
  if (config_.min_response_tokens == 0 || config_.max_response_tokens < config_.min_response_tokens) {
    throw std::invalid_argument("scripted backend: need 1 <= min_response_tokens <= max_response_tokens");
  }
}

std::string ScriptedBackend::complete(const std::string& prompt_text, double /*temperature*/, std::uint64_t seed) {
  if (auto it = config_.canned.find(prompt_text); it != config_.canned.end()) {
    return it->second;
  }
  Rng rng(derive_seed(seed, prompt_text));
  const auto& words = config_.words;
  std::vector<std::string> out;

  if (auto instruction = extract_seed_instruction(prompt_text)) {
    const auto source = split_whitespace(*instruction);
    std::size_t len = 0;
    if (rng.bernoulli(config_.short_prompt_rate)) {
      len = 1 + rng.index(3);
    } else {
      const auto base = static_cast<long long>(std::max<std::size_t>(source.size(), 1));
      len = static_cast<std::size_t>(std::max(1LL, base - 2 + static_cast<long long>(rng.index(5))));
    }
    for (std::size_t i = 0; i < len; ++i) {
      if (!source.empty() && rng.bernoulli(0.5)) {
        out.push_back(source[rng.index(source.size())]);
      } else {
        out.push_back(words[rng.index(words.size())]);
      }
    }
  } else {
    const auto span = config_.max_response_tokens - config_.min_response_tokens + 1;
    const auto len = config_.min_response_tokens + rng.index(span);
    for (std::size_t i = 0; i < len; ++i) {
      out.push_back(words[rng.index(words.size())]);
    }
  }

  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i > 0) {
      text.push_back(' ');
    }
    text += out[i];
  }
  return text;
}

// ---------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay(int retry_index) const {
  const double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, retry_index);
  return std::chrono::milliseconds(static_cast<long long>(std::min(ms, static_cast<double>(max_delay.count()))));
}

SplitUrl split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw std::invalid_argument("url without scheme: " + std::string(url));
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw std::invalid_argument("unsupported url scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == scheme_end + 3) {
    throw std::invalid_argument("url without host: " + std::string(url));
  }
  if (path_start == std::string_view::npos) {
    return {std::string(url), "/"};
  }
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

namespace {

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string post_json_with_retry(const HttpEndpointConfig& config, const std::string& body, const SleepFn& sleep,
                                 std::atomic<std::size_t>* attempts) {
  const auto target = split_url(config.url);
  httplib::Headers headers;
  if (!config.auth_env.empty()) {
    const char* token = std::getenv(config.auth_env.c_str());
    if (token == nullptr) {
      throw BackendError("environment variable " + config.auth_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  httplib::Client client(target.scheme_host_port);
  client.set_connection_timeout(config.timeout);
  client.set_read_timeout(config.timeout);
  client.set_write_timeout(config.timeout);

  std::string last_error;
  for (int attempt = 0; attempt <= config.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      (sleep ? sleep : SleepFn(default_sleep))(config.retry.delay(attempt - 1));
    }
    if (attempts != nullptr) {
      ++*attempts;
    }
    auto res = client.Post(target.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return res->body;
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable_status(res->status)) {
      throw BackendError(config.url + ": " + last_error + " (not retried)");
    }
  }
  throw BackendError(config.url + ": giving up after " + std::to_string(config.retry.max_retries + 1) +
                     " attempts, last error: " + last_error);
}

HttpBackend::HttpBackend(HttpEndpointConfig config, SleepFn sleep)
    : config_(std::move(config)), sleep_(std::move(sleep)) {
  split_url(config_.url);
}

std::string HttpBackend::complete(const std::string& prompt_text, double temperature, std::uint64_t seed) {
  nlohmann::json req;
  req["model"] = config_.model;
  req["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt_text}}});
  req["temperature"] = temperature;
  // Most chat APIs take a signed 64-bit seed.
  req["seed"] = static_cast<std::int64_t>(seed >> 1);
  const auto body = post_json_with_retry(config_, req.dump(), sleep_, &attempts_);
  try {
    const auto reply = nlohmann::json::parse(body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(config_.url + ": malformed completion reply: " + e.what());
  }
}

HttpScorer::HttpScorer(HttpEndpointConfig config, Vocabulary vocab, SleepFn sleep)
    : config_(std::move(config)), vocab_(std::move(vocab)), sleep_(std::move(sleep)) {
  split_url(config_.url);
}

double HttpScorer::score(const Prompt& prompt, const Response& response) const {
  nlohmann::json req;
  req["prompt"] = vocab_.decode(prompt.tokens());
  req["response"] = vocab_.decode(response.tokens());
  const auto body = post_json_with_retry(config_, req.dump(), sleep_);
  try {
    return nlohmann::json::parse(body).at("reward").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(config_.url + ": malformed reward reply: " + e.what());
  }
}

}  // namespace mdpo
