#include "mdpo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

#include "mdpo/rng.hpp"

namespace mdpo {

std::span<double> SparseGrad::row(std::size_t r) {
  if (width_ == 0) {
    throw std::logic_error("SparseGrad: row width not set");
  }
  auto [it, inserted] = rows_.try_emplace(r);
  if (inserted) {
    it->second.assign(width_, 0.0);
  }
  return it->second;
}

void SparseGrad::add_scaled(const SparseGrad& other, double scale) {
  if (other.rows_.empty()) {
    return;
  }
  if (width_ == 0 && rows_.empty()) {
    width_ = other.width_;
  }
  if (width_ != other.width_) {
    throw std::invalid_argument("SparseGrad: row widths differ");
  }
  for (const auto& [r, block] : other.rows_) {
    auto dst = row(r);
    for (std::size_t j = 0; j < width_; ++j) {
      dst[j] += scale * block[j];
    }
  }
}

void SparseGrad::scale(double factor) {
  for (auto& [r, block] : rows_) {
    for (double& v : block) {
      v *= factor;
    }
  }
}

double SparseGrad::at(std::size_t coord) const {
  if (width_ == 0) {
    return 0.0;
  }
  auto it = rows_.find(coord / width_);
  return it == rows_.end() ? 0.0 : it->second[coord % width_];
}

double SparseGrad::norm() const {
  double s = 0.0;
  for_each([&](std::size_t, double v) { s += v * v; });
  return std::sqrt(s);
}

PolicyParams::PolicyParams(std::size_t vocab_size, std::uint32_t max_len, std::optional<TokenId> eos_token)
    : PolicyParams(vocab_size, max_len,
                   eos_token.value_or(vocab_size == 0 ? 0 : static_cast<TokenId>(vocab_size - 1)),
                   std::vector<double>((vocab_size + 1) * vocab_size, 0.0)) {}

PolicyParams::PolicyParams(std::size_t vocab_size, std::uint32_t max_len, TokenId eos_token,
                           std::vector<double> table)
    : vocab_size_(vocab_size), max_len_(max_len), eos_token_(eos_token), table_(std::move(table)) {
  if (vocab_size_ == 0) {
    throw std::invalid_argument("policy: vocabulary size must be positive");
  }
  if (max_len_ == 0) {
    throw std::invalid_argument("policy: max_len must be >= 1");
  }
  if (eos_token_ >= vocab_size_) {
    throw std::invalid_argument("policy: eos_token outside vocabulary");
  }
  if (table_.size() != (vocab_size_ + 1) * vocab_size_) {
    throw std::invalid_argument("policy: logits table must have (V+1)*V entries");
  }
  if (!std::all_of(table_.begin(), table_.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("policy: logits table has a non-finite entry");
  }
}

PolicyParams PolicyParams::random(std::size_t vocab_size, double scale, std::uint64_t seed, std::uint32_t max_len) {
  Rng rng(seed);
  std::vector<double> table((vocab_size + 1) * vocab_size);
  for (double& v : table) {
    v = scale * rng.normal();
  }
  return PolicyParams(vocab_size, max_len, static_cast<TokenId>(vocab_size - 1), std::move(table));
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp((logits[j] - top) / temperature);
    z += p[j];
  }
  for (double& v : p) {
    v /= z;
  }
  return p;
}

namespace {

double log_sum_exp(std::span<const double> row) {
  const double top = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) {
    z += std::exp(v - top);
  }
  return top + std::log(z);
}

void check_tokens(const PolicyParams& params, const Prompt& prompt, const Response& response) {
  const auto v = params.vocab_size();
  for (TokenId t : prompt.tokens()) {
    if (t >= v) {
      throw std::invalid_argument("log_prob: prompt token " + std::to_string(t) + " out of vocabulary");
    }
  }
  for (TokenId t : response.tokens()) {
    if (t >= v) {
      throw std::invalid_argument("log_prob: response token " + std::to_string(t) + " out of vocabulary");
    }
  }
}

}  // namespace

LogProbResult log_prob(const PolicyParams& params, const Prompt& prompt, const Response& response) {
  check_tokens(params, prompt, response);
  LogProbResult out;
  out.grad = SparseGrad(params.vocab_size());
  std::size_t ctx = prompt.tokens().back();
  for (TokenId y : response.tokens()) {
    const auto row = params.row(ctx);
    const double lse = log_sum_exp(row);
    out.logprob += row[y] - lse;
    auto g = out.grad.row(ctx);
    for (std::size_t j = 0; j < row.size(); ++j) {
      g[j] -= std::exp(row[j] - lse);
    }
    g[y] += 1.0;
    ctx = y;
  }
  // Rounding can push a near-certain sequence a hair above zero.
  out.logprob = std::min(out.logprob, 0.0);
  return out;
}

double log_prob_value(const PolicyParams& params, const Prompt& prompt, const Response& response) {
  check_tokens(params, prompt, response);
  double lp = 0.0;
  std::size_t ctx = prompt.tokens().back();
  for (TokenId y : response.tokens()) {
    const auto row = params.row(ctx);
    lp += row[y] - log_sum_exp(row);
    ctx = y;
  }
  return std::min(lp, 0.0);
}

Response sample_response(const PolicyParams& params, const Prompt& prompt, double temperature,
                         std::uint32_t max_len, std::uint64_t rng_seed) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("sample_response: temperature must be > 0");
  }
  if (max_len == 0) {
    throw std::invalid_argument("sample_response: max_len must be >= 1");
  }
  for (TokenId t : prompt.tokens()) {
    if (t >= params.vocab_size()) {
      throw std::invalid_argument("sample_response: prompt token out of vocabulary");
    }
  }
  const bool greedy = temperature < 1e-6;
  Rng rng(rng_seed);
  TokenSeq out;
  std::size_t ctx = prompt.tokens().back();
  while (out.size() < max_len) {
    const auto row = params.row(ctx);
    TokenId next = 0;
    if (greedy) {
      next = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      const auto p = softmax(row, temperature);
      const double u = rng.uniform();
      double acc = 0.0;
      next = static_cast<TokenId>(p.size() - 1);
      for (std::size_t j = 0; j < p.size(); ++j) {
        acc += p[j];
        if (u < acc) {
          next = static_cast<TokenId>(j);
          break;
        }
      }
    }
    out.push_back(next);
    if (next == params.eos_token()) {
      break;
    }
    ctx = next;
  }
  return Response(std::move(out), ResponseSource::kPolicy, 0);
}

FrozenPolicy freeze_reference(const PolicyParams& params) { return FrozenPolicy(params); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kBinaryMagic[8] = {'M', 'D', 'P', 'O', 'P', 'O', 'L', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  }
  return v;
}

bool is_binary_path(const std::filesystem::path& path) { return path.extension() == ".bin"; }

}  // namespace

std::vector<std::uint8_t> encode_policy_binary(const PolicyParams& params) {
  std::vector<std::uint8_t> out(std::begin(kBinaryMagic), std::end(kBinaryMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.vocab_size()));
  put_u32(out, params.max_len());
  put_u32(out, params.eos_token());
  for (double v : params.table()) {
    put_f64(out, v);
  }
  return out;
}

PolicyParams decode_policy_binary(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 8 + 4 * 4;
  if (bytes.size() < kHeader || !std::equal(std::begin(kBinaryMagic), std::end(kBinaryMagic), bytes.begin(),
                                            [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw std::invalid_argument("policy file: bad magic");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kFormatVersion) {
    throw std::invalid_argument("policy file: unsupported version " + std::to_string(version));
  }
  const auto v = static_cast<std::size_t>(get_le(bytes, 12, 4));
  const auto max_len = static_cast<std::uint32_t>(get_le(bytes, 16, 4));
  const auto eos = static_cast<TokenId>(get_le(bytes, 20, 4));
  const std::size_t count = (v + 1) * v;
  if (bytes.size() != kHeader + 8 * count) {
    throw std::invalid_argument("policy file: size does not match header");
  }
  std::vector<double> table(count);
  for (std::size_t i = 0; i < count; ++i) {
    table[i] = std::bit_cast<double>(get_le(bytes, kHeader + 8 * i, 8));
  }
  return PolicyParams(v, max_len, eos, std::move(table));
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params, const Vocabulary* vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write policy file " + path.string());
  }
  if (is_binary_path(path)) {
    const auto bytes = encode_policy_binary(params);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return;
  }
  nlohmann::json j;
  j["format"] = "mdpo-policy";
  j["version"] = kFormatVersion;
  j["V"] = params.vocab_size();
  j["max_len"] = params.max_len();
  j["eos_token"] = params.eos_token();
  if (vocab != nullptr) {
    if (vocab->size() != params.vocab_size()) {
      throw std::invalid_argument("save_policy: vocabulary size does not match policy");
    }
    j["vocab"] = vocab->user_words();
  }
  j["table"] = std::vector<double>(params.table().begin(), params.table().end());
  out << j.dump() << '\n';
}

PolicyFile load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot read policy file " + path.string());
  }
  if (is_binary_path(path)) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return PolicyFile{decode_policy_binary(bytes), std::nullopt};
  }
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "mdpo-policy" || j.value("version", 0U) != kFormatVersion) {
      throw std::invalid_argument("not an mdpo-policy v1 document");
    }
    PolicyParams params(j.at("V").get<std::size_t>(), j.at("max_len").get<std::uint32_t>(),
                        j.at("eos_token").get<TokenId>(), j.at("table").get<std::vector<double>>());
    std::optional<Vocabulary> vocab;
    if (j.contains("vocab")) {
      vocab.emplace(j["vocab"].get<std::vector<std::string>>());
      if (vocab->size() != params.vocab_size()) {
        throw std::invalid_argument("vocab size does not match V");
      }
    }
    return PolicyFile{std::move(params), std::move(vocab)};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("policy file " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("policy file " + path.string() + ": " + e.what());
  }
}

}  // namespace mdpo
