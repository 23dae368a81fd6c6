#include "mdpo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mdpo/rng.hpp"

namespace mdpo {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw std::invalid_argument("config: '" + path_ + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: '" + name(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void read_opt(const char* key, std::optional<T>& out) {
    if (j_.contains(key)) {
      T v{};
      read(key, v);
      out = v;
    } else {
      seen_.insert(key);
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      return std::nullopt;
    }
    return Section(j_.at(key), name(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) {
        throw std::invalid_argument("config: unknown key '" + name(k.c_str()) + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_endpoint(Section& s, HttpEndpointConfig& http) {
  long long timeout = http.timeout.count();
  long long initial = http.retry.initial_delay.count();
  long long max_delay = http.retry.max_delay.count();
  s.read("url", http.url);
  s.read("model", http.model);
  s.read("auth_env", http.auth_env);
  s.read("timeout_seconds", timeout);
  s.read("max_retries", http.retry.max_retries);
  s.read("initial_delay_ms", initial);
  s.read("backoff_multiplier", http.retry.multiplier);
  s.read("max_delay_ms", max_delay);
  http.timeout = std::chrono::seconds(timeout);
  http.retry.initial_delay = std::chrono::milliseconds(initial);
  http.retry.max_delay = std::chrono::milliseconds(max_delay);
  if (timeout <= 0 || initial < 0 || max_delay < 0 || http.retry.max_retries < 0 || !(http.retry.multiplier >= 1.0)) {
    throw std::invalid_argument("config: '" + s.name("") + "' has an invalid timeout or retry setting");
  }
}

void check_kind(const Section& s, const std::string& kind, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (kind == a) {
      return;
    }
  }
  throw std::invalid_argument("config: '" + s.name("kind") + "' has unknown value '" + kind + "'");
}

void read_backend(Section s, BackendSpec& b) {
  s.read("kind", b.kind);
  check_kind(s, b.kind, {"scripted", "http"});
  s.read("words", b.scripted.words);
  s.read("min_response_tokens", b.scripted.min_response_tokens);
  s.read("max_response_tokens", b.scripted.max_response_tokens);
  s.read("short_prompt_rate", b.scripted.short_prompt_rate);
  s.read("canned", b.scripted.canned);
  read_endpoint(s, b.http);
  s.finish();
  if (b.kind == "http" && b.http.url.empty()) {
    throw std::invalid_argument("config: '" + s.name("url") + "' is required for an http backend");
  }
}

ordered_json endpoint_json(const HttpEndpointConfig& http) {
  return {{"url", http.url},
          {"model", http.model},
          {"auth_env", http.auth_env},
          {"timeout_seconds", http.timeout.count()},
          {"max_retries", http.retry.max_retries},
          {"initial_delay_ms", http.retry.initial_delay.count()},
          {"backoff_multiplier", http.retry.multiplier},
          {"max_delay_ms", http.retry.max_delay.count()}};
}

ordered_json backend_json(const BackendSpec& b) {
  ordered_json j{{"kind", b.kind},
                 {"words", b.scripted.words},
                 {"min_response_tokens", b.scripted.min_response_tokens},
                 {"max_response_tokens", b.scripted.max_response_tokens},
                 {"short_prompt_rate", b.scripted.short_prompt_rate},
                 {"canned", b.scripted.canned}};
  j.update(endpoint_json(b.http));
  return j;
}

}  // namespace

TrainConfig RunConfig::train_config(std::string_view preset) const {
  TrainConfig c;
  if (preset == "desk") {
    c = TrainConfig::desk();
  } else if (preset == "paper") {
    c = TrainConfig::paper();
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(preset) + "' (expected desk or paper)");
  }
  if (train.method) c.method = *train.method;
  if (train.beta) c.beta = Beta(*train.beta);
  if (train.lr) c.lr = *train.lr;
  if (train.epochs) c.epochs = *train.epochs;
  if (train.batch_size) c.batch_size = *train.batch_size;
  if (train.optimizer) c.optimizer = *train.optimizer;
  if (train.adam_beta1) c.adam_beta1 = *train.adam_beta1;
  if (train.adam_beta2) c.adam_beta2 = *train.adam_beta2;
  if (train.adam_eps) c.adam_eps = *train.adam_eps;
  c.seed = derive_seed(seed, "train");
  c.validate();
  return c;
}

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  Section root(doc, "");
  RunConfig c;
  if (!root.has("schema_version")) {
    throw std::invalid_argument("config: 'schema_version' is required");
  }
  root.read("schema_version", c.schema_version);
  if (c.schema_version != kRunConfigSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " + std::to_string(c.schema_version));
  }
  root.read("seed", c.seed);

  if (auto p = root.child("pipeline")) {
    auto& a = c.pipeline.augmentation;
    p->read("prompts_per_seed", a.prompts_per_seed);
    p->read("responses_per_model", a.responses_per_model);
    p->read("temperature", a.temperature);
    p->read("min_prompt_tokens", a.min_prompt_tokens);
    p->read("max_in_flight", a.max_in_flight);
    p->read("policy_max_len", a.policy_max_len);
    p->read("emit_seed_ranked", c.pipeline.emit_seed_ranked);
    p->read("vocab", c.pipeline.vocab);
    if (auto b = p->child("prompt_backend")) read_backend(*b, c.prompt_backend);
    if (auto b = p->child("response_backend")) read_backend(*b, c.response_backend);
    if (auto s = p->child("scorer")) {
      s->read("kind", c.scorer.kind);
      check_kind(*s, c.scorer.kind, {"trained", "file", "http"});
      s->read("path", c.scorer.path);
      read_endpoint(*s, c.scorer.http);
      s->finish();
      if (c.scorer.kind == "file" && c.scorer.path.empty()) {
        throw std::invalid_argument("config: 'pipeline.scorer.path' is required for a file scorer");
      }
      if (c.scorer.kind == "http" && c.scorer.http.url.empty()) {
        throw std::invalid_argument("config: 'pipeline.scorer.url' is required for an http scorer");
      }
    }
    p->finish();
    a.validate();
  }

  if (auto r = root.child("reward")) {
    r->read("lr", c.pipeline.reward.lr);
    r->read("epochs", c.pipeline.reward.epochs);
    r->read("l2", c.pipeline.reward.l2);
    r->read("init_scale", c.pipeline.reward.init_scale);
    r->finish();
    if (!(c.pipeline.reward.lr > 0.0) || c.pipeline.reward.epochs < 1 || !(c.pipeline.reward.l2 >= 0.0) ||
        !(c.pipeline.reward.init_scale >= 0.0)) {
      throw std::invalid_argument("config: 'reward' needs lr > 0, epochs >= 1, l2 >= 0, init_scale >= 0");
    }
  }

  if (auto t = root.child("train")) {
    std::optional<std::string> method;
    std::optional<std::string> optimizer;
    t->read_opt("method", method);
    t->read_opt("optimizer", optimizer);
    t->read_opt("beta", c.train.beta);
    t->read_opt("lr", c.train.lr);
    t->read_opt("epochs", c.train.epochs);
    t->read_opt("batch_size", c.train.batch_size);
    t->read_opt("adam_beta1", c.train.adam_beta1);
    t->read_opt("adam_beta2", c.train.adam_beta2);
    t->read_opt("adam_eps", c.train.adam_eps);
    t->read("init_scale", c.policy_init_scale);
    t->read("max_len", c.policy_max_len);
    t->finish();
    if (method) c.train.method = parse_train_method(*method);
    if (optimizer) c.train.optimizer = parse_optimizer(*optimizer);
    if (!(c.policy_init_scale >= 0.0) || c.policy_max_len == 0) {
      throw std::invalid_argument("config: 'train' needs init_scale >= 0 and max_len >= 1");
    }
    c.train_config("desk");
  }

  if (auto e = root.child("eval")) {
    e->read("temperature", c.eval.sampling.temperature);
    e->read("max_len", c.eval.sampling.max_len);
    e->read("bootstrap_resamples", c.eval.sampling.bootstrap_resamples);
    e->read("beta", c.eval.beta);
    e->read("judge", c.eval.judge);
    if (auto j = e->child("judge_endpoint")) {
      read_endpoint(*j, c.eval.judge_http);
      j->finish();
    }
    e->finish();
    if (c.eval.judge != "reward" && c.eval.judge != "http") {
      throw std::invalid_argument("config: 'eval.judge' must be reward or http");
    }
    if (!(c.eval.sampling.temperature > 0.0) || c.eval.sampling.max_len == 0 ||
        c.eval.sampling.bootstrap_resamples < 1) {
      throw std::invalid_argument("config: 'eval' needs temperature > 0, max_len >= 1, bootstrap_resamples >= 1");
    }
    Beta{c.eval.beta};
  }
  root.finish();

  c.pipeline.augmentation.seed = derive_seed(c.seed, "pipeline");
  c.pipeline.reward.seed = derive_seed(c.seed, "reward");
  c.eval.sampling.seed = derive_seed(c.seed, "eval");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument(path.string() + ": cannot open config file");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string default_run_config_json() {
  const RunConfig c;
  const auto& a = c.pipeline.augmentation;
  const TrainConfig t = TrainConfig::desk();
  ordered_json j;
  j["schema_version"] = kRunConfigSchemaVersion;
  j["seed"] = c.seed;
  j["pipeline"] = {{"prompts_per_seed", a.prompts_per_seed},
                   {"responses_per_model", a.responses_per_model},
                   {"temperature", a.temperature},
                   {"min_prompt_tokens", a.min_prompt_tokens},
                   {"max_in_flight", a.max_in_flight},
                   {"policy_max_len", a.policy_max_len},
                   {"emit_seed_ranked", c.pipeline.emit_seed_ranked},
                   {"vocab", c.pipeline.vocab},
                   {"prompt_backend", backend_json(c.prompt_backend)},
                   {"response_backend", backend_json(c.response_backend)}};
  ordered_json scorer{{"kind", c.scorer.kind}, {"path", c.scorer.path}};
  scorer.update(endpoint_json(c.scorer.http));
  j["pipeline"]["scorer"] = scorer;
  j["reward"] = {{"lr", c.pipeline.reward.lr},
                 {"epochs", c.pipeline.reward.epochs},
                 {"l2", c.pipeline.reward.l2},
                 {"init_scale", c.pipeline.reward.init_scale}};
  j["train"] = {{"method", to_string(t.method)},
                {"beta", t.beta.value()},
                {"lr", t.lr},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"optimizer", to_string(t.optimizer)},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"init_scale", c.policy_init_scale},
                {"max_len", c.policy_max_len}};
  j["eval"] = {{"temperature", c.eval.sampling.temperature},
               {"max_len", c.eval.sampling.max_len},
               {"bootstrap_resamples", c.eval.sampling.bootstrap_resamples},
               {"beta", c.eval.beta},
               {"judge", c.eval.judge},
               {"judge_endpoint", endpoint_json(c.eval.judge_http)}};
  return j.dump(2) + "\n";
}

}  // namespace mdpo
