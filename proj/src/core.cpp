#include "mdpo/core.hpp"

#include <cmath>
#include <stdexcept>

namespace mdpo {

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) {
      ++i;
    }
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) {
      ++i;
    }
    if (i > start) {
      out.emplace_back(text.substr(start, i - start));
    }
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  words_.emplace_back(kEos);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::string& w = words_[i];
    if (w.empty() || split_whitespace(w).size() != 1 || split_whitespace(w).front() != w) {
      throw std::invalid_argument("vocabulary word must be a single non-empty token: '" + w + "'");
    }
    if (!index_.emplace(w, static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary word '" + w + "'");
    }
  }
  if (auto it = index_.find(std::string(kUnk)); it != index_.end()) {
    unk_ = it->second;
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (!contains(id)) {
    throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(size()));
  }
  return words_[id];
}

std::vector<std::string> Vocabulary::user_words() const {
  return {words_.begin(), words_.end() - 1};
}

TokenSeq Vocabulary::encode(std::string_view text, bool lenient) const {
  TokenSeq out;
  for (const auto& w : split_whitespace(text)) {
    if (auto id = find(w)) {
      out.push_back(*id);
    } else if (lenient && unk_) {
      out.push_back(*unk_);
    } else {
      throw std::invalid_argument("out-of-vocabulary token '" + w + "'");
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      out.push_back(' ');
    }
    out += word(tokens[i]);
  }
  return out;
}

Prompt::Prompt(std::string id, TokenSeq tokens) : id_(std::move(id)), tokens_(std::move(tokens)) {
  if (tokens_.empty()) {
    throw std::invalid_argument("prompt '" + id_ + "' has no tokens");
  }
}

std::string_view to_string(ResponseSource source) {
  switch (source) {
    case ResponseSource::kSeedChosen:
      return "seed-chosen";
    case ResponseSource::kSeedRejected:
      return "seed-rejected";
    case ResponseSource::kGenBackend:
      return "gen-backend";
    case ResponseSource::kPolicy:
      return "policy";
  }
  return "policy";
}

ResponseSource parse_response_source(std::string_view name) {
  for (auto s : {ResponseSource::kSeedChosen, ResponseSource::kSeedRejected, ResponseSource::kGenBackend,
                 ResponseSource::kPolicy}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw std::invalid_argument("unknown response source '" + std::string(name) + "'");
}

Response::Response(TokenSeq tokens, ResponseSource source, std::uint32_t gen_index)
    : tokens_(std::move(tokens)), source_(source), gen_index_(gen_index) {
  if (tokens_.empty()) {
    throw std::invalid_argument("response has no tokens");
  }
}

PreferencePair::PreferencePair(Prompt p, Response c, Response r)
    : prompt(std::move(p)), chosen(std::move(c)), rejected(std::move(r)) {
  if (chosen == rejected) {
    throw std::invalid_argument("preference pair '" + prompt.id() +
                                "': chosen and rejected are the same response");
  }
}

RankedExample::RankedExample(Prompt prompt, std::vector<Response> responses, std::vector<double> rewards)
    : prompt_(std::move(prompt)), responses_(std::move(responses)), rewards_(std::move(rewards)) {
  if (responses_.size() < 2) {
    throw std::invalid_argument("ranked example '" + prompt_.id() + "' needs at least 2 responses");
  }
  if (responses_.size() != rewards_.size()) {
    throw std::invalid_argument("ranked example '" + prompt_.id() + "': responses and rewards differ in length");
  }
  for (std::size_t i = 0; i < rewards_.size(); ++i) {
    if (!std::isfinite(rewards_[i])) {
      throw std::invalid_argument("ranked example '" + prompt_.id() + "': non-finite reward");
    }
    if (i > 0 && rewards_[i] > rewards_[i - 1]) {
      throw std::invalid_argument("ranked example '" + prompt_.id() + "': rewards must be non-increasing");
    }
  }
}

CoefficientSchedule coefficients(std::size_t n) {
  if (n < 2) {
    throw std::invalid_argument("coefficients: n must be >= 2, got " + std::to_string(n));
  }
  // Integer numerators (n - 2i + 1) keep the schedule exactly antisymmetric.
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto numer = static_cast<long long>(n) - 2 * static_cast<long long>(i) + 1;
    w[i - 1] = static_cast<double>(numer) / denom;
  }
  return CoefficientSchedule(std::move(w));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) noexcept {
  // log sigma(x) = -softplus(-x)
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

double bt_probability(double r1, double r2) {
  if (!std::isfinite(r1) || !std::isfinite(r2)) {
    throw std::invalid_argument("bt_probability: rewards must be finite");
  }
  return sigmoid(r1 - r2);
}

double ranked_chain_probability(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("ranked_chain_probability: need at least 2 rewards");
  }
  double p = 1.0;
  for (std::size_t i = 0; i + 1 < rewards.size(); ++i) {
    p *= bt_probability(rewards[i], rewards[i + 1]);
  }
  return p;
}

}  // namespace mdpo
