#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdpo/backends.hpp"
#include "mdpo/config.hpp"
#include "mdpo/dataset_io.hpp"
#include "mdpo/errors.hpp"
#include "mdpo/eval.hpp"
#include "mdpo/pipeline.hpp"
#include "mdpo/reward_model.hpp"
#include "mdpo/rng.hpp"
#include "mdpo/synthetic.hpp"
#include "mdpo/trainer.hpp"
#include "mdpo/verify.hpp"

namespace mdpo::cli {

namespace fs = std::filesystem;

namespace {

/// Raised for bad input that the library reports in a different shape.
struct UserError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw UserError(std::string(what) + " not found: " + path);
  }
}

RunConfig config_from(const std::string& path) {
  if (path.empty()) {
    return parse_run_config(R"({"schema_version": 1})");
  }
  require_file(path, "config file");
  return load_run_config(path);
}

std::unique_ptr<GenBackend> make_backend(const BackendSpec& spec, const Vocabulary& vocab) {
  if (spec.kind == "http") {
    return std::make_unique<HttpBackend>(spec.http);
  }
  auto cfg = spec.scripted;
  if (cfg.words.empty()) {
    for (const auto& w : vocab.user_words()) {
      if (w != Vocabulary::kUnk) {
        cfg.words.push_back(w);
      }
    }
  }
  return std::make_unique<ScriptedBackend>(std::move(cfg));
}

std::string metrics_path_for(const fs::path& out) {
  auto p = out;
  p.replace_extension(".metrics.jsonl");
  return p.string();
}

PolicyFile load_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  return load_policy(path);
}

// ---- augment ----

struct AugmentArgs {
  std::string config;
  std::string seeds;
  std::string out;
  std::string policy;
  bool force = false;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out) {
  RunConfig cfg = config_from(a.config);
  require_file(a.seeds, "seed file");
  const Vocabulary vocab =
      cfg.pipeline.vocab.empty() ? vocabulary_from_pairs_file(a.seeds) : Vocabulary(cfg.pipeline.vocab);
  cfg.pipeline.vocab = vocab.user_words();

  auto prompt_backend = make_backend(cfg.prompt_backend, vocab);
  auto response_backend = make_backend(cfg.response_backend, vocab);
  std::optional<PolicyParams> policy;
  if (!a.policy.empty()) {
    auto file = load_checkpoint(a.policy);
    if (file.vocab && !(*file.vocab == vocab)) {
      throw UserError("policy " + a.policy + " was trained on a different vocabulary");
    }
    policy = std::move(file.params);
  }
  std::unique_ptr<Scorer> scorer;
  if (cfg.scorer.kind == "file") {
    require_file(cfg.scorer.path, "reward model");
    scorer = std::make_unique<LinearScorer>(load_reward(cfg.scorer.path));
  } else if (cfg.scorer.kind == "http") {
    scorer = std::make_unique<HttpScorer>(cfg.scorer.http, vocab);
  }

  PipelineBackends backends;
  backends.prompt_backend = prompt_backend.get();
  backends.response_backend = response_backend.get();
  backends.policy = policy ? &*policy : nullptr;
  backends.scorer = scorer.get();
  const auto report = run_pipeline(a.seeds, a.out, cfg.pipeline, backends, a.force);
  out << "seed prompts       " << report.seed_prompts << "\n"
      << "generated prompts  " << report.generated_prompts << "\n"
      << "kept prompts       " << report.filtered_prompts << " (" << report.dropped_prompts << " too short)\n"
      << "responses          " << report.responses << "\n"
      << "ranked examples    " << report.ranked_examples << "\n"
      << "adjacent pairs     " << report.adjacent_pairs << "\n"
      << std::fixed << std::setprecision(3) << "elapsed            " << report.elapsed_seconds << " s\n"
      << "wrote " << (fs::path(a.out) / "ranked.jsonl").string() << "\n";
  return kOk;
}

// ---- train-reward ----

struct TrainRewardArgs {
  std::string config;
  std::string pairs;
  std::string out;
  std::string vocab;
  std::string heldout;
};

double training_accuracy(const RewardParams& params, const std::vector<PreferencePair>& pairs) {
  std::size_t right = 0;
  for (const auto& p : pairs) {
    right += score(params, p.prompt, p.chosen).value > score(params, p.prompt, p.rejected).value ? 1 : 0;
  }
  return pairs.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(pairs.size());
}

int cmd_train_reward(const TrainRewardArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  require_file(a.pairs, "pairs file");
  Vocabulary vocab;
  if (!a.vocab.empty()) {
    require_file(a.vocab, "vocabulary file");
    vocab = read_vocabulary(a.vocab);
  } else {
    vocab = vocabulary_from_pairs_file(a.pairs);
  }
  if (detect_dataset_kind(a.pairs) != DatasetKind::kPairs) {
    throw UserError(a.pairs + ": expected preference pairs with \"chosen\" and \"rejected\"");
  }
  const auto pairs = read_pairs(a.pairs, vocab);
  const auto fit = train_bt(vocab, pairs, cfg.pipeline.reward);
  save_reward(a.out, fit.params);
  out << std::fixed << std::setprecision(4) << "pairs              " << pairs.size() << "\n"
      << "final objective    " << fit.loss_trace.back() << "\n"
      << "train accuracy     " << training_accuracy(fit.params, pairs) << "\n";
  if (!a.heldout.empty()) {
    require_file(a.heldout, "held-out pairs file");
    const auto held = read_pairs(a.heldout, vocab);
    out << "held-out accuracy  " << training_accuracy(fit.params, held) << "\n";
  }
  out << "wrote " << a.out << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string method;
  std::string data;
  std::string preset = "desk";
  std::string out;
  std::string vocab;
  std::string init;
  std::string metrics;
  std::string checkpoint_dir;
  bool force = false;
};

Vocabulary training_vocab(const TrainArgs& a) {
  if (!a.vocab.empty()) {
    require_file(a.vocab, "vocabulary file");
    return read_vocabulary(a.vocab);
  }
  const auto sibling = fs::path(a.data).parent_path() / "vocab.json";
  if (fs::is_regular_file(sibling)) {
    return read_vocabulary(sibling);
  }
  return vocabulary_from_dataset_file(a.data);
}

/// The policy `train` starts from when no --init is given.
PolicyParams initial_policy(const RunConfig& cfg, std::size_t vocab_size) {
  if (cfg.policy_init_scale > 0.0) {
    return PolicyParams::random(vocab_size, cfg.policy_init_scale, derive_seed(cfg.seed, "policy-init"),
                                cfg.policy_max_len);
  }
  return PolicyParams(vocab_size, cfg.policy_max_len);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(a.config);
  TrainConfig tc = cfg.train_config(a.preset);
  if (!a.method.empty()) {
    tc.method = parse_train_method(a.method);
  }
  require_file(a.data, "dataset");
  if (fs::exists(a.out) && !a.force) {
    throw RefusalError(a.out + " already exists; pass --force to overwrite");
  }
  const Vocabulary vocab = training_vocab(a);

  TrainingData data;
  const auto kind = detect_dataset_kind(a.data);
  if (tc.method == TrainMethod::kDpo && kind == DatasetKind::kRanked) {
    throw UserError(a.data + ":1: --method dpo needs preference pairs but this is a ranked dataset; use --method " +
                    "dpo-adjacent-expanded to expand it into adjacent pairs, or --method mdpo");
  }
  if (tc.method != TrainMethod::kDpo && kind == DatasetKind::kPairs) {
    throw UserError(a.data + ":1: --method " + std::string(to_string(tc.method)) +
                    " needs a ranked dataset but this file holds preference pairs; use --method dpo");
  }
  if (kind == DatasetKind::kPairs) {
    data.pairs = read_pairs(a.data, vocab);
  } else {
    data.ranked = read_ranked(a.data, vocab);
  }

  PolicyParams init = initial_policy(cfg, vocab.size());
  if (!a.init.empty()) {
    auto file = load_checkpoint(a.init);
    if (file.params.vocab_size() != vocab.size() || (file.vocab && !(*file.vocab == vocab))) {
      throw UserError("initial checkpoint " + a.init + " does not match the dataset vocabulary");
    }
    init = std::move(file.params);
  }

  if (!a.checkpoint_dir.empty()) {
    fs::create_directories(a.checkpoint_dir);
  }
  const auto on_epoch = [&](int epoch, const PolicyParams& params) {
    if (!a.checkpoint_dir.empty()) {
      save_policy(fs::path(a.checkpoint_dir) / ("epoch-" + std::to_string(epoch) + ".json"), params, &vocab);
    }
  };
  const std::string metrics = a.metrics.empty() ? metrics_path_for(a.out) : a.metrics;
  try {
    const auto result = train(data, init, tc, on_epoch);
    save_policy(a.out, result.params, &vocab);
    write_metrics_jsonl(metrics, result.trace);
    const auto& last = result.trace.steps.back();
    out << std::fixed << std::setprecision(6) << "method      " << to_string(tc.method) << "\n"
        << "optimizer   " << to_string(tc.optimizer) << "  lr " << tc.lr << "  batch " << tc.batch_size
        << "  epochs " << tc.epochs << "\n"
        << "steps       " << result.trace.total_steps << "\n"
        << "final loss  " << last.mean_loss << "\n"
        << "wrote " << a.out << " and " << metrics << "\n";
  } catch (const NonFiniteLoss& e) {
    save_policy(a.out, e.last_good(), &vocab);
    write_metrics_jsonl(metrics, e.trace());
    err << "error: " << e.what() << "\nlast good parameters saved to " << a.out << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string config;
  std::string policy_a;
  std::string policy_b;
  std::string prompts;
  std::string judge;
  std::string ranked;
  std::string reference;
  std::string out;
  std::string plot;
  std::string vocab;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  const auto fa = load_checkpoint(a.policy_a);
  const auto fb = load_checkpoint(a.policy_b);
  std::optional<Vocabulary> given;
  if (!a.vocab.empty()) {
    require_file(a.vocab, "vocabulary file");
    given = read_vocabulary(a.vocab);
  }
  auto vocab_of = [&](const PolicyFile& f, const std::string& path) {
    if (f.vocab && given && !(*f.vocab == *given)) {
      throw UserError("checkpoint " + path + " does not match --vocab " + a.vocab);
    }
    if (!f.vocab && !given) {
      throw UserError("checkpoint " + path + " carries no vocabulary; pass --vocab");
    }
    const Vocabulary v = f.vocab ? *f.vocab : *given;
    if (v.size() != f.params.vocab_size()) {
      throw UserError("checkpoint " + path + " has " + std::to_string(f.params.vocab_size()) +
                      " tokens but its vocabulary has " + std::to_string(v.size()));
    }
    return v;
  };
  const Vocabulary vocab = vocab_of(fa, a.policy_a);
  if (!(vocab_of(fb, a.policy_b) == vocab)) {
    throw UserError("checkpoints " + a.policy_a + " and " + a.policy_b + " use different vocabularies");
  }
  require_file(a.prompts, "prompt file");
  const auto prompts = read_prompts(a.prompts, vocab);

  std::unique_ptr<Judge> judge;
  std::unique_ptr<GenBackend> judge_backend;
  if (cfg.eval.judge == "http") {
    judge_backend = std::make_unique<HttpBackend>(cfg.eval.judge_http);
    judge = std::make_unique<LlmJudge>(*judge_backend, vocab);
  } else {
    if (a.judge.empty()) {
      throw UserError("--judge <reward.json> is required with the reward judge");
    }
    require_file(a.judge, "judge reward model");
    auto params = load_reward(a.judge);
    if (!(params.vocab == vocab)) {
      throw UserError("judge " + a.judge + " uses a different vocabulary than the checkpoints");
    }
    judge = std::make_unique<RewardJudge>(std::move(params));
  }

  auto report = head_to_head(fa.params, fb.params, prompts, *judge, cfg.eval.sampling);
  out << report.to_table();

  std::optional<double> accuracy;
  if (!a.ranked.empty()) {
    require_file(a.ranked, "ranked dataset");
    const auto ranked = read_ranked(a.ranked, vocab);
    const PolicyParams ref =
        a.reference.empty() ? initial_policy(cfg, vocab.size()) : load_checkpoint(a.reference).params;
    if (ref.vocab_size() != vocab.size()) {
      throw UserError("reference " + a.reference + " does not match the checkpoint vocabulary");
    }
    accuracy = ranking_accuracy(fa.params, ref, Beta(cfg.eval.beta), ranked);
    out << std::fixed << std::setprecision(4) << "ranking accuracy " << *accuracy << "\n";
  }
  if (!a.out.empty()) {
    auto text = report.to_json();
    if (accuracy) {
      auto j = nlohmann::ordered_json::parse(text);
      j["ranking_accuracy"] = *accuracy;
      text = j.dump(2) + "\n";
    }
    write_text_file(a.out, text);
    out << "wrote " << a.out << "\n";
  }
  if (!a.plot.empty()) {
    write_text_file(a.plot, report.to_csv());
    out << "wrote " << a.plot << "\n";
  }
  return kOk;
}

// ---- verify ----

int cmd_verify(const std::vector<std::string>& suites, const std::string& config, std::ostream& out,
               std::ostream& err) {
  VerifyOptions opt;
  if (!config.empty()) {
    opt.seed = derive_seed(config_from(config).seed, "verify");
  }
  const auto names = suites.empty() ? verify_suite_names() : suites;
  const auto results = run_verify_suites(names, opt);
  out << format_suite_table(results);
  const bool ok = std::all_of(results.begin(), results.end(), [](const SuiteResult& r) { return r.passed(); });
  if (!ok) {
    err << "verify: property failures found\n";
    return kPropertyFailure;
  }
  return kOk;
}

// ---- bench ----

struct BenchArgs {
  std::string config;
  std::string data;
  std::size_t examples = 500;
  std::size_t n = 4;
  int repeats = 3;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  TrainConfig tc = cfg.train_config("desk");
  std::vector<RankedExample> ranked;
  std::size_t vocab_size = 0;
  if (!a.data.empty()) {
    require_file(a.data, "ranked dataset");
    const auto vocab = vocabulary_from_dataset_file(a.data);
    ranked = read_ranked(a.data, vocab);
    vocab_size = vocab.size();
  } else {
    const auto vocab = synthetic_vocabulary(16);
    const auto policy = PolicyParams::random(vocab.size(), 0.5, derive_seed(cfg.seed, "bench-policy"), 16);
    const auto planted = planted_reward(vocab, 1.0, derive_seed(cfg.seed, "bench-reward"));
    const auto prompts = random_prompts(vocab, a.examples, 2, 6, derive_seed(cfg.seed, "bench-prompts"));
    ranked = planted_ranked(policy, prompts, planted, a.n, 1.0, 16, derive_seed(cfg.seed, "bench-ranked"));
    vocab_size = vocab.size();
  }
  const PolicyParams init(vocab_size, cfg.policy_max_len);
  const auto report = step_cost_benchmark(ranked, init, tc, a.repeats);
  out << report.to_json();
  return kOk;
}

std::string defaults_footer() {
  return "Default run configuration (every key may be overridden in --config).\n"
         "The train section shows the desk preset; train keys set in a file take\n"
         "precedence over --preset.\n" +
         default_run_config_json();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-response preference optimization toolkit", "mdpo"};
  app.require_subcommand(1);
  app.footer(defaults_footer());
  app.get_formatter()->column_width(36);

  AugmentArgs aug;
  auto* augment = app.add_subcommand("augment", "Build a ranked dataset from seed preference pairs");
  augment->add_option("--config", aug.config, "Run config (JSON)");
  augment->add_option("--seeds", aug.seeds, "Seed pairs JSONL")->required();
  augment->add_option("--out", aug.out, "Output directory")->required();
  augment->add_option("--policy", aug.policy, "Policy checkpoint for policy samples (default: uniform policy)");
  augment->add_flag("--force", aug.force, "Overwrite a non-empty output directory");

  TrainRewardArgs tr;
  auto* train_reward = app.add_subcommand("train-reward", "Fit a Bradley-Terry reward model on preference pairs");
  train_reward->add_option("--config", tr.config, "Run config (JSON)");
  train_reward->add_option("--pairs", tr.pairs, "Preference pairs JSONL")->required();
  train_reward->add_option("--out", tr.out, "Reward model output (JSON)")->required();
  train_reward->add_option("--vocab", tr.vocab, "Vocabulary JSON (default: words of --pairs)");
  train_reward->add_option("--heldout", tr.heldout, "Held-out pairs for an accuracy report");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a policy with dpo, dpo-adjacent-expanded or mdpo");
  train_cmd->add_option("--config", ta.config, "Run config (JSON)");
  train_cmd->add_option("--method", ta.method, "dpo | dpo-adjacent-expanded | mdpo (default: config, else mdpo)");
  train_cmd->add_option("--data", ta.data, "Pairs JSONL (dpo) or ranked JSONL")->required();
  train_cmd->add_option("--preset", ta.preset, "desk: adam lr 0.05 batch 8 epochs 20; paper: sgd lr 1e-6 batch 2 epochs 3")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  train_cmd->add_option("--out", ta.out, "Checkpoint path (.json, or .bin for binary)")->required();
  train_cmd->add_option("--vocab", ta.vocab, "Vocabulary JSON (default: vocab.json beside --data, else its words)");
  train_cmd->add_option("--init", ta.init, "Initial checkpoint (default: from config train.init_scale)");
  train_cmd->add_option("--metrics", ta.metrics, "Per-step metrics JSONL (default: <out>.metrics.jsonl)");
  train_cmd->add_option("--checkpoint-dir", ta.checkpoint_dir, "Write a checkpoint after every epoch");
  train_cmd->add_flag("--force", ta.force, "Overwrite an existing checkpoint");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Head-to-head win rate of policy A against policy B");
  eval->add_option("--config", ea.config, "Run config (JSON)");
  eval->add_option("-a,--policy-a", ea.policy_a, "Checkpoint A")->required();
  eval->add_option("-b,--policy-b", ea.policy_b, "Checkpoint B (baseline)")->required();
  eval->add_option("--prompts", ea.prompts, "Prompt JSONL (\"id\", \"prompt\")")->required();
  eval->add_option("--judge", ea.judge, "Ground-truth reward model for the reward judge");
  eval->add_option("--ranked", ea.ranked, "Ranked JSONL for implicit-reward ranking accuracy of A");
  eval->add_option("--reference", ea.reference, "Reference checkpoint for ranking accuracy (default: the initial policy train uses with --config)");
  eval->add_option("--out", ea.out, "Report JSON");
  eval->add_option("--plot", ea.plot, "Per-prompt outcomes as CSV");
  eval->add_option("--vocab", ea.vocab, "Vocabulary JSON for checkpoints saved without one (.bin)");

  std::vector<std::string> suites;
  std::string verify_config;
  auto* verify = app.add_subcommand("verify", "Run the built-in property suites");
  verify->add_option("--suite", suites, "Suite to run (repeatable; default: all)")
      ->check(CLI::IsMember(verify_suite_names()));
  verify->add_option("--config", verify_config, "Run config (JSON); its seed drives the suites");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Epoch cost of mdpo against adjacent-pair-expanded dpo");
  bench->add_option("--config", ba.config, "Run config (JSON)");
  bench->add_option("--data", ba.data, "Ranked JSONL (default: synthetic)");
  bench->add_option("--examples", ba.examples, "Synthetic examples")->capture_default_str();
  bench->add_option("--n", ba.n, "Synthetic responses per example")->check(CLI::Range(2, 64))->capture_default_str();
  bench->add_option("--repeats", ba.repeats, "Timed epochs per method (fastest kept)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (augment->parsed()) return cmd_augment(aug, out);
    if (train_reward->parsed()) return cmd_train_reward(tr, out);
    if (train_cmd->parsed()) return cmd_train(ta, out, err);
    if (eval->parsed()) return cmd_eval(ea, out);
    if (verify->parsed()) return cmd_verify(suites, verify_config, out, err);
    if (bench->parsed()) return cmd_bench(ba, out);
  } catch (const RefusalError& e) {
    err << "refused: " << e.what() << "\n";
    return kRefusal;
  } catch (const StageFailed& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUserError;
}

}  // namespace mdpo::cli
