#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mdpo {

/// SplitMix64 finalizer. Used to fan a single root seed out into
/// independent, reproducible sub-streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for sub-stream `index` of the stream named `tag` under `root`.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) noexcept {
  return mix64(mix64(root ^ fnv1a64(tag)) + index);
}

/// mt19937_64 with hand-written distributions. The standard distributions are
/// implementation-defined, and artifacts must be byte-identical across
/// platforms, so only the raw engine output is used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdpo
