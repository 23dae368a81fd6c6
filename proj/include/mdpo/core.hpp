#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdpo {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Whitespace-tokenized word list. The end-of-sequence token "</s>" is always
/// the last id. If the word list contains "<unk>", lenient encoding maps
/// unknown words onto it.
class Vocabulary {
 public:
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  /// `words` must be unique and must not contain "</s>"; it is appended.
  explicit Vocabulary(std::vector<std::string> words);

  /// Number of ids including the end-of-sequence token.
  std::size_t size() const noexcept { return words_.size(); }
  TokenId eos() const noexcept { return static_cast<TokenId>(words_.size() - 1); }
  std::optional<TokenId> unk() const noexcept { return unk_; }

  std::optional<TokenId> find(std::string_view word) const;
  const std::string& word(TokenId id) const;
  bool contains(TokenId id) const noexcept { return id < words_.size(); }

  /// Words without the trailing end-of-sequence token, as passed in.
  std::vector<std::string> user_words() const;

  /// Splits on ASCII whitespace. Unknown words throw std::invalid_argument
  /// unless `lenient` is set and the vocabulary has "<unk>".
  TokenSeq encode(std::string_view text, bool lenient = false) const;
  std::string decode(std::span<const TokenId> tokens) const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> unk_;
};

std::vector<std::string> split_whitespace(std::string_view text);

class Prompt {
 public:
  /// Throws std::invalid_argument on an empty token sequence.
  Prompt(std::string id, TokenSeq tokens);

  const std::string& id() const noexcept { return id_; }
  const TokenSeq& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }

  bool operator==(const Prompt&) const = default;

 private:
  std::string id_;
  TokenSeq tokens_;
};

enum class ResponseSource { kSeedChosen, kSeedRejected, kGenBackend, kPolicy };

std::string_view to_string(ResponseSource source);
/// Throws std::invalid_argument for unknown names.
ResponseSource parse_response_source(std::string_view name);

class Response {
 public:
  /// Throws std::invalid_argument on an empty token sequence.
  Response(TokenSeq tokens, ResponseSource source = ResponseSource::kPolicy, std::uint32_t gen_index = 0);

  const TokenSeq& tokens() const noexcept { return tokens_; }
  ResponseSource source() const noexcept { return source_; }
  std::uint32_t gen_index() const noexcept { return gen_index_; }
  std::size_t size() const noexcept { return tokens_.size(); }

  bool operator==(const Response&) const = default;

 private:
  TokenSeq tokens_;
  ResponseSource source_;
  std::uint32_t gen_index_;
};

struct PreferencePair {
  /// Rejects a pair whose chosen and rejected responses are the same object
  /// (same text, source and generation index).
  PreferencePair(Prompt prompt, Response chosen, Response rejected);

  Prompt prompt;
  Response chosen;
  Response rejected;
};

/// A prompt with n >= 2 responses in rank order (index 0 = most preferred)
/// and their non-increasing rewards.
class RankedExample {
 public:
  RankedExample(Prompt prompt, std::vector<Response> responses, std::vector<double> rewards);

  const Prompt& prompt() const noexcept { return prompt_; }
  const std::vector<Response>& responses() const noexcept { return responses_; }
  const std::vector<double>& rewards() const noexcept { return rewards_; }
  std::size_t n() const noexcept { return responses_.size(); }

 private:
  Prompt prompt_;
  std::vector<Response> responses_;
  std::vector<double> rewards_;
};

/// Normalized MDPO weights w_i = (n - 2i + 1) / (n - 1), i = 1..n.
class CoefficientSchedule {
 public:
  std::size_t n() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

 private:
  friend CoefficientSchedule coefficients(std::size_t n);
  explicit CoefficientSchedule(std::vector<double> w) : weights_(std::move(w)) {}
  std::vector<double> weights_;
};

/// Throws std::invalid_argument for n < 2.
CoefficientSchedule coefficients(std::size_t n);

// Numerically stable scalar helpers.
double sigmoid(double x) noexcept;
/// log(sigmoid(x)) without overflow for any finite x.
double log_sigmoid(double x) noexcept;

/// Bradley-Terry probability that the item with reward r1 beats r2,
/// exp(r1) / (exp(r1) + exp(r2)), evaluated as sigmoid(r1 - r2).
double bt_probability(double r1, double r2);

/// Probability of a full ranking under the adjacent-pair model: the product of
/// bt_probability over consecutive rewards.
double ranked_chain_probability(std::span<const double> rewards);

}  // namespace mdpo
