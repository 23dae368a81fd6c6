#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mdpo {

// Built-in property suites run by `mdpo verify`.

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::vector<std::string> failures;
  double seconds = 0.0;

  bool passed() const { return failures.empty(); }
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  /// Weight schedule under test; defaults to coefficients(). Replaceable so a
  /// deliberately broken schedule can be shown to fail.
  std::function<std::vector<double>(std::size_t)> coefficient_fn;
};

/// Suite names: coefficients, reduction, gradients, shift, lemma, expansion,
/// softmax.
std::vector<std::string> verify_suite_names();

/// Throws std::invalid_argument for an unknown suite name.
SuiteResult run_verify_suite(const std::string& name, const VerifyOptions& options = {});

std::vector<SuiteResult> run_verify_suites(const std::vector<std::string>& names, const VerifyOptions& options = {});

std::string format_suite_table(const std::vector<SuiteResult>& results);

}  // namespace mdpo
