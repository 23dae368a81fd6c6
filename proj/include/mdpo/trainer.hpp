#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdpo/core.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/losses.hpp"
#include "mdpo/policy.hpp"

namespace mdpo {

enum class TrainMethod { kDpo, kDpoAdjacentExpanded, kMdpo };
enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(TrainMethod method);
TrainMethod parse_train_method(std::string_view name);
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  TrainMethod method = TrainMethod::kMdpo;
  Beta beta{Beta::kDefault};
  double lr = 0.05;
  int epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Adam with a step size that converges at desk scale.
  static TrainConfig desk();
  /// Plain SGD with lr 1e-6, batch size 2, 3 epochs.
  static TrainConfig paper();

  void validate() const;
};

/// Pairs for dpo; ranked examples for mdpo and dpo-adjacent-expanded.
struct TrainingData {
  std::vector<PreferencePair> pairs;
  std::vector<RankedExample> ranked;
};

struct StepMetrics {
  std::size_t step = 0;
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_margin = 0.0;
  double grad_norm = 0.0;
};

struct TrainTrace {
  std::vector<StepMetrics> steps;
  std::vector<double> epoch_seconds;
  std::size_t total_steps = 0;
  /// Calls to log_prob on the trained policy (the dominant cost).
  std::size_t policy_logprob_evals = 0;
};

struct TrainResult {
  PolicyParams params;
  TrainTrace trace;
};

/// A step produced a non-finite loss. `last_good` holds the parameters
/// before that step.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, PolicyParams last_good, TrainTrace trace)
      : Error(what), last_good_(std::move(last_good)), trace_(std::move(trace)) {}
  const PolicyParams& last_good() const noexcept { return last_good_; }
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  PolicyParams last_good_;
  TrainTrace trace_;
};

using EpochCallback = std::function<void(int epoch, const PolicyParams& params)>;

/// ceil(examples / batch_size) * epochs.
std::size_t expected_steps(std::size_t examples, std::size_t batch_size, int epochs);

/// Minibatch first-order minimization of the mean loss. The reference policy
/// is a frozen copy of `init`. Shuffling is seeded, and gradients are reduced
/// in batch order, so a fixed config gives bit-identical results. Throws
/// std::invalid_argument when the method does not match the data.
TrainResult train(const TrainingData& data, const PolicyParams& init, const TrainConfig& config,
                  const EpochCallback& on_epoch_end = {});

struct MethodCost {
  std::size_t examples = 0;          // items per epoch (examples or pairs)
  std::size_t steps = 0;
  std::size_t policy_logprob_evals = 0;
  double epoch_seconds = 0.0;        // fastest of the repeats
  double step_seconds = 0.0;
};

struct BenchReport {
  std::size_t n = 0;
  MethodCost mdpo;
  MethodCost dpo_expanded;
  /// mdpo epoch time / expanded-DPO epoch time.
  double ratio = 0.0;
  /// Predicted ratio of log-prob evaluations: n / (2 (n - 1)).
  double predicted_ratio = 0.0;

  std::string to_json() const;
};

/// Times one epoch of mdpo on `ranked` against one epoch of DPO on its
/// adjacent-pair expansion, `repeats` times each, keeping the fastest.
BenchReport step_cost_benchmark(const std::vector<RankedExample>& ranked, const PolicyParams& init,
                                const TrainConfig& config, int repeats = 3);

void write_metrics_jsonl(const std::filesystem::path& path, const TrainTrace& trace);

}  // namespace mdpo
