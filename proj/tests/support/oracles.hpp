#pragma once

// Reference implementations written without the library's helpers. They
// trade speed and numerical care for obviousness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mdpo/core.hpp"
#include "mdpo/policy.hpp"

namespace oracle {

using mdpo::PolicyParams;
using mdpo::Prompt;
using mdpo::Response;

/// log p(response | prompt) straight from the definition: each factor is
/// exp(logit) / sum exp(logits) of the row selected by the previous token.
inline double seq_log_prob(const PolicyParams& p, const Prompt& prompt, const Response& response) {
  const std::size_t v = p.vocab_size();
  std::size_t prev = prompt.tokens().back();
  double total = 0.0;
  for (auto y : response.tokens()) {
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      z += std::exp(p.table()[prev * v + j]);
    }
    total += std::log(std::exp(p.table()[prev * v + y]) / z);
    prev = y;
  }
  return total;
}

/// -log sigma(m) = log(1 + exp(-m)).
inline double neg_log_sigmoid(double m) { return std::log1p(std::exp(-m)); }

inline double dpo_loss(const PolicyParams& theta, const PolicyParams& ref, double beta, const Prompt& x,
                       const Response& yw, const Response& yl) {
  const double rw = seq_log_prob(theta, x, yw) - seq_log_prob(ref, x, yw);
  const double rl = seq_log_prob(theta, x, yl) - seq_log_prob(ref, x, yl);
  return neg_log_sigmoid(beta * (rw - rl));
}

/// Sum of ratios[i] - ratios[k] over all comparisons i < k, divided by n - 1.
inline double allpairs_margin(const std::vector<double>& ratios) {
  const std::size_t n = ratios.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      sum += ratios[i] - ratios[k];
    }
  }
  return sum / static_cast<double>(n - 1);
}

/// Number of times index i appears as the winner minus as the loser over
/// all comparisons i < k.
inline std::vector<double> net_appearances(std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      out[i] += 1.0;
      out[k] -= 1.0;
    }
  }
  return out;
}

inline double mdpo_loss(const PolicyParams& theta, const PolicyParams& ref, double beta, const Prompt& x,
                        const std::vector<Response>& ranked) {
  std::vector<double> ratios;
  for (const auto& y : ranked) {
    ratios.push_back(seq_log_prob(theta, x, y) - seq_log_prob(ref, x, y));
  }
  return neg_log_sigmoid(beta * allpairs_margin(ratios));
}

/// Central differences over every table coordinate.
inline std::vector<double> fd_gradient(const PolicyParams& at, const std::function<double(const PolicyParams&)>& f,
                                       double h = 1e-5) {
  PolicyParams p = at;
  auto table = p.mutable_table();
  std::vector<double> g(table.size());
  for (std::size_t c = 0; c < table.size(); ++c) {
    const double saved = table[c];
    table[c] = saved + h;
    const double up = f(p);
    table[c] = saved - h;
    const double down = f(p);
    table[c] = saved;
    g[c] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - b| relative to the larger magnitude, with an absolute floor below
/// which central differences are rounding noise.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---- generators ----

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }

  mdpo::TokenSeq tokens(std::size_t vocab, std::size_t min_len, std::size_t max_len) {
    mdpo::TokenSeq s(index(min_len, max_len));
    for (auto& t : s) {
      t = static_cast<mdpo::TokenId>(index(0, vocab - 1));
    }
    return s;
  }

  PolicyParams policy(std::size_t vocab, double scale = 1.0) {
    std::vector<double> table((vocab + 1) * vocab);
    for (auto& x : table) {
      x = normal(scale);
    }
    return PolicyParams(vocab, 32, static_cast<mdpo::TokenId>(vocab - 1), std::move(table));
  }

  std::vector<Response> responses(std::size_t vocab, std::size_t n) {
    std::vector<Response> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.emplace_back(tokens(vocab, 1, 5), mdpo::ResponseSource::kPolicy, static_cast<std::uint32_t>(i));
    }
    return out;
  }
};

/// Decreasing rewards so `responses` is already in rank order.
inline mdpo::RankedExample ranked(const Prompt& x, std::vector<Response> responses) {
  std::vector<double> rewards;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    rewards.push_back(-static_cast<double>(i));
  }
  return mdpo::RankedExample(x, std::move(responses), std::move(rewards));
}

// ---- files ----

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mdpo-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      out.push_back(line);
    }
  }
  return out;
}

}  // namespace oracle
