#include "mdpo/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mdpo/dataset_io.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

std::string_view to_string(TrainMethod method) {
  switch (method) {
    case TrainMethod::kDpo:
      return "dpo";
    case TrainMethod::kDpoAdjacentExpanded:
      return "dpo-adjacent-expanded";
    case TrainMethod::kMdpo:
      return "mdpo";
  }
  return "mdpo";
}

TrainMethod parse_train_method(std::string_view name) {
  for (auto m : {TrainMethod::kDpo, TrainMethod::kDpoAdjacentExpanded, TrainMethod::kMdpo}) {
    if (to_string(m) == name) {
      return m;
    }
  }
  throw std::invalid_argument("unknown training method '" + std::string(name) +
                              "' (expected dpo, dpo-adjacent-expanded or mdpo)");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") {
    return OptimizerKind::kSgd;
  }
  if (name == "adam") {
    return OptimizerKind::kAdam;
  }
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.lr = 1e-6;
  c.batch_size = 2;
  c.epochs = 3;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("train: lr must be positive");
  }
  if (epochs < 1) {
    throw std::invalid_argument("train: epochs must be >= 1");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw std::invalid_argument("train: invalid adam hyperparameters");
  }
}

std::size_t expected_steps(std::size_t examples, std::size_t batch_size, int epochs) {
  return (examples + batch_size - 1) / batch_size * static_cast<std::size_t>(epochs);
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::size_t dim) : config_(config) {
    if (config.optimizer == OptimizerKind::kAdam) {
      m_.assign(dim, 0.0);
      v_.assign(dim, 0.0);
    }
  }

  /// Returns false, leaving `params` and the optimizer state untouched, if
  /// the update would make a parameter non-finite.
  bool step(std::span<double> params, const SparseGrad& grad) {
    if (config_.optimizer == OptimizerKind::kSgd) {
      saved_.clear();
      bool finite = true;
      grad.for_each([&](std::size_t coord, double g) {
        saved_.emplace_back(coord, params[coord]);
        params[coord] -= config_.lr * g;
        finite = finite && std::isfinite(params[coord]);
      });
      if (!finite) {
        for (const auto& [coord, old] : saved_) {
          params[coord] = old;
        }
      }
      return finite;
    }
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_ + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_ + 1));
    g_.assign(params.size(), 0.0);
    grad.for_each([&](std::size_t coord, double g) { g_[coord] = g; });
    m_next_.resize(params.size());
    v_next_.resize(params.size());
    p_next_.resize(params.size());
    bool finite = true;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = g_[i];
      m_next_[i] = b1 * m_[i] + (1.0 - b1) * g;
      v_next_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
      p_next_[i] = params[i] - config_.lr * (m_next_[i] / c1) / (std::sqrt(v_next_[i] / c2) + config_.adam_eps);
      finite = finite && std::isfinite(p_next_[i]);
    }
    if (!finite) {
      return false;
    }
    ++t_;
    std::copy(p_next_.begin(), p_next_.end(), params.begin());
    m_.swap(m_next_);
    v_.swap(v_next_);
    return true;
  }

 private:
  const TrainConfig& config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<double> g_;
  std::vector<double> m_next_;
  std::vector<double> v_next_;
  std::vector<double> p_next_;
  std::vector<std::pair<std::size_t, double>> saved_;
  long long t_ = 0;
};

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.index(i)]);
  }
  return order;
}

}  // namespace

TrainResult train(const TrainingData& data, const PolicyParams& init, const TrainConfig& config,
                  const EpochCallback& on_epoch_end) {
  config.validate();

  std::vector<PreferencePair> expanded;
  const std::vector<PreferencePair>* pairs = nullptr;
  const std::vector<RankedExample>* ranked = nullptr;
  switch (config.method) {
    case TrainMethod::kDpo:
      if (data.pairs.empty()) {
        throw std::invalid_argument(data.ranked.empty()
                                        ? "train: empty dataset"
                                        : "train: dpo needs preference pairs; got ranked examples "
                                          "(use dpo-adjacent-expanded or mdpo)");
      }
      pairs = &data.pairs;
      break;
    case TrainMethod::kDpoAdjacentExpanded:
    case TrainMethod::kMdpo:
      if (data.ranked.empty()) {
        throw std::invalid_argument(data.pairs.empty() ? "train: empty dataset"
                                                       : "train: " + std::string(to_string(config.method)) +
                                                             " needs ranked examples; got preference pairs");
      }
      if (config.method == TrainMethod::kMdpo) {
        ranked = &data.ranked;
      } else {
        expanded = expand_adjacent_pairs(data.ranked);
        pairs = &expanded;
      }
      break;
  }
  const std::size_t count = pairs != nullptr ? pairs->size() : ranked->size();

  const FrozenPolicy ref = freeze_reference(init);
  TrainResult result{init, {}};
  result.trace.steps.reserve(expected_steps(count, config.batch_size, config.epochs));
  Optimizer optimizer(config, result.params.table().size());

  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const auto order = shuffled_order(count, derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t begin = 0; begin < count; begin += config.batch_size) {
      const std::size_t end = std::min(count, begin + config.batch_size);
      SparseGrad grad;
      double loss_sum = 0.0;
      double margin_sum = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        LossValue lv;
        if (pairs != nullptr) {
          lv = dpo_loss(result.params, ref, config.beta, (*pairs)[idx]);
          result.trace.policy_logprob_evals += 2;
        } else {
          lv = mdpo_loss(result.params, ref, config.beta, (*ranked)[idx]);
          result.trace.policy_logprob_evals += (*ranked)[idx].n();
        }
        loss_sum += lv.loss;
        margin_sum += lv.inner_margin;
        grad.add_scaled(lv.grad, 1.0);
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      grad.scale(inv);
      StepMetrics metrics{step, epoch, loss_sum * inv, margin_sum * inv, grad.norm()};
      if (!std::isfinite(metrics.mean_loss) || !std::isfinite(metrics.grad_norm)) {
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step), result.params, result.trace);
      }
      result.trace.steps.push_back(metrics);
      if (!optimizer.step(result.params.mutable_table(), grad)) {
        throw NonFiniteLoss("non-finite parameters after step " + std::to_string(step), result.params, result.trace);
      }
      ++step;
    }
    result.trace.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count());
    if (on_epoch_end) {
      on_epoch_end(epoch, result.params);
    }
  }
  result.trace.total_steps = step;
  return result;
}

std::string BenchReport::to_json() const {
  auto cost = [](const MethodCost& c) {
    return nlohmann::ordered_json{{"examples", c.examples},
                                  {"steps", c.steps},
                                  {"policy_logprob_evals", c.policy_logprob_evals},
                                  {"epoch_seconds", c.epoch_seconds},
                                  {"step_seconds", c.step_seconds}};
  };
  nlohmann::ordered_json j;
  j["n"] = n;
  j["mdpo"] = cost(mdpo);
  j["dpo_adjacent_expanded"] = cost(dpo_expanded);
  j["epoch_time_ratio"] = ratio;
  j["predicted_logprob_ratio"] = predicted_ratio;
  return j.dump(2) + "\n";
}

BenchReport step_cost_benchmark(const std::vector<RankedExample>& ranked, const PolicyParams& init,
                                const TrainConfig& config, int repeats) {
  if (ranked.empty()) {
    throw std::invalid_argument("step_cost_benchmark: empty dataset");
  }
  BenchReport report;
  report.n = ranked.front().n();
  for (const auto& ex : ranked) {
    if (ex.n() != report.n) {
      throw std::invalid_argument("step_cost_benchmark: examples must share one response count");
    }
  }
  TrainingData data{{}, ranked};
  auto measure = [&](TrainMethod method) {
    TrainConfig c = config;
    c.method = method;
    c.epochs = 1;
    MethodCost cost;
    cost.epoch_seconds = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(repeats, 1); ++r) {
      const auto res = train(data, init, c);
      cost.epoch_seconds = std::min(cost.epoch_seconds, res.trace.epoch_seconds.front());
      cost.steps = res.trace.total_steps;
      cost.policy_logprob_evals = res.trace.policy_logprob_evals;
    }
    cost.examples = method == TrainMethod::kMdpo ? ranked.size() : ranked.size() * (report.n - 1);
    cost.step_seconds = cost.epoch_seconds / static_cast<double>(cost.steps);
    return cost;
  };
  report.mdpo = measure(TrainMethod::kMdpo);
  report.dpo_expanded = measure(TrainMethod::kDpoAdjacentExpanded);
  report.ratio = report.mdpo.epoch_seconds / report.dpo_expanded.epoch_seconds;
  report.predicted_ratio = static_cast<double>(report.n) / (2.0 * static_cast<double>(report.n - 1));
  return report;
}

void write_metrics_jsonl(const std::filesystem::path& path, const TrainTrace& trace) {
  std::ostringstream os;
  for (const auto& s : trace.steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["epoch"] = s.epoch;
    j["loss"] = s.mean_loss;
    j["margin"] = s.mean_margin;
    j["grad_norm"] = s.grad_norm;
    os << j.dump() << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace mdpo
