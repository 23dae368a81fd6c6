#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mdpo/core.hpp"

namespace mdpo {

/// Gradient over flat parameter coordinates, stored as dense blocks for the
/// table rows that were touched. Rows are kept ordered so that merging and
/// iteration are deterministic.
class SparseGrad {
 public:
  SparseGrad() = default;
  explicit SparseGrad(std::size_t row_width) : width_(row_width) {}

  std::size_t row_width() const noexcept { return width_; }

  void add(std::size_t coord, double value) { row(coord / width_)[coord % width_] += value; }
  /// The block for `r`, zero-filled on first use. Needs a row width.
  std::span<double> row(std::size_t r);
  /// this += scale * other. An empty gradient adopts the other's row width.
  void add_scaled(const SparseGrad& other, double scale);
  void scale(double factor);

  double at(std::size_t coord) const;
  bool contains(std::size_t coord) const { return width_ != 0 && rows_.contains(coord / width_); }
  /// Number of stored coordinates.
  std::size_t size() const noexcept { return rows_.size() * width_; }
  bool empty() const noexcept { return rows_.empty(); }
  double norm() const;

  /// Calls fn(coord, value) for every stored coordinate in ascending order.
  template <typename F>
  void for_each(F&& fn) const {
    for (const auto& [r, block] : rows_) {
      for (std::size_t j = 0; j < width_; ++j) {
        fn(r * width_ + j, block[j]);
      }
    }
  }

  const std::map<std::size_t, std::vector<double>>& rows() const noexcept { return rows_; }

 private:
  std::size_t width_ = 0;
  std::map<std::size_t, std::vector<double>> rows_;
};

/// Bigram log-linear policy. Row c of the (V+1) x V logits table scores the
/// next token given previous token c; row V is the begin-of-sequence context.
/// Responses are conditioned on the last prompt token.
class PolicyParams {
 public:
  static constexpr std::uint32_t kDefaultMaxLen = 32;

  /// All-zero table (uniform next-token distribution). `eos_token` defaults to
  /// V - 1, matching Vocabulary.
  explicit PolicyParams(std::size_t vocab_size, std::uint32_t max_len = kDefaultMaxLen,
                        std::optional<TokenId> eos_token = std::nullopt);
  /// Throws std::invalid_argument if the table shape is wrong or holds a
  /// non-finite entry.
  PolicyParams(std::size_t vocab_size, std::uint32_t max_len, TokenId eos_token, std::vector<double> table);

  /// Entries drawn i.i.d. from N(0, scale^2).
  static PolicyParams random(std::size_t vocab_size, double scale, std::uint64_t seed,
                             std::uint32_t max_len = kDefaultMaxLen);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t rows() const noexcept { return vocab_size_ + 1; }
  std::size_t bos_row() const noexcept { return vocab_size_; }
  std::uint32_t max_len() const noexcept { return max_len_; }
  TokenId eos_token() const noexcept { return eos_token_; }

  std::size_t coord(std::size_t row, std::size_t col) const noexcept { return row * vocab_size_ + col; }
  double logit(std::size_t row, std::size_t col) const { return table_[coord(row, col)]; }
  std::span<const double> row(std::size_t r) const { return {table_.data() + r * vocab_size_, vocab_size_}; }

  std::span<const double> table() const noexcept { return table_; }
  std::span<double> mutable_table() noexcept { return table_; }

  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t vocab_size_;
  std::uint32_t max_len_;
  TokenId eos_token_;
  std::vector<double> table_;
};

/// Softmax of one row, max-shifted.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

struct LogProbResult {
  double logprob = 0.0;  // <= 0
  SparseGrad grad;       // d logprob / d logits, visited rows only
};

/// Sum of per-token log-probabilities of `response` given `prompt`, with the
/// exact gradient. Throws std::invalid_argument on out-of-vocabulary tokens.
LogProbResult log_prob(const PolicyParams& params, const Prompt& prompt, const Response& response);

/// Same value as log_prob(...).logprob without building the gradient.
double log_prob_value(const PolicyParams& params, const Prompt& prompt, const Response& response);

/// Ancestral sampling from softmax(logits / temperature). Stops after emitting
/// the end-of-sequence token (which is kept in the response) or after
/// `max_len` tokens. Temperatures below 1e-6 decode greedily.
Response sample_response(const PolicyParams& params, const Prompt& prompt, double temperature,
                         std::uint32_t max_len, std::uint64_t rng_seed);

/// Read-only snapshot used as the reference policy.
class FrozenPolicy {
 public:
  explicit FrozenPolicy(const PolicyParams& params) : params_(params) {}
  const PolicyParams& params() const noexcept { return params_; }
  operator const PolicyParams&() const noexcept { return params_; }

 private:
  const PolicyParams params_;
};

/// Deep copy that later training cannot mutate.
FrozenPolicy freeze_reference(const PolicyParams& params);

// Policy files. JSON: {"format": "mdpo-policy", "version": 1, "V", "max_len",
// "eos_token", "vocab"?: [...], "table": [row-major]}. Binary: see
// docs/formats.md. The file kind is picked from the extension (.bin = binary).

struct PolicyFile {
  PolicyParams params;
  std::optional<Vocabulary> vocab;
};

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const Vocabulary* vocab = nullptr);
PolicyFile load_policy(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_policy_binary(const PolicyParams& params);
PolicyParams decode_policy_binary(std::span<const std::uint8_t> bytes);

}  // namespace mdpo
