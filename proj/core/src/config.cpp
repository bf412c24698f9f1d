#include <cstdlib>

#include <json.hpp>

#include "seqsel/config.hpp"
#include "seqsel/hash.hpp"
#include "seqsel/io.hpp"

namespace seqsel {

using json = nlohmann::json;

namespace {

json section(const json& j, const char* name) {
  if (!j.contains(name)) return json::object();
  require(j[name].is_object(), ErrorKind::config,
          std::string("config: '") + name + "' must be an object");
  return j[name];
}

template <typename T>
T field(const json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, std::string("config: bad value for '") + name + "'");
  }
}

}  // namespace

RunConfig config_from_json(std::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::config, "config: malformed JSON");

  RunConfig c;
  c.seed = field<uint64_t>(j, "seed", c.seed);

  const json paths = section(j, "paths");
  c.paths.pool = field<std::string>(paths, "pool", c.paths.pool);
  c.paths.instances = field<std::string>(paths, "instances", c.paths.instances);
  c.paths.records = field<std::string>(paths, "records", c.paths.records);
  c.paths.checkpoint = field<std::string>(paths, "checkpoint", c.paths.checkpoint);
  c.paths.index = field<std::string>(paths, "index", c.paths.index);
  c.paths.reports = field<std::string>(paths, "reports", c.paths.reports);

  const json hp = section(j, "hyperparams");
  c.hp.k = field<int>(hp, "k", c.hp.k);
  c.hp.l = field<int>(hp, "l", c.hp.l);
  c.hp.b = field<int>(hp, "b", c.hp.b);
  c.hp.w = field<int>(hp, "w", c.hp.w);
  c.hp.tau = field<double>(hp, "tau", c.hp.tau);
  c.hp.lr = field<double>(hp, "lr", c.hp.lr);
  c.hp.epochs = field<int>(hp, "epochs", c.hp.epochs);
  c.hp.batch_size = field<int>(hp, "batch_size", c.hp.batch_size);
  c.hp.d = field<int>(hp, "d", c.hp.d);
  c.hp.random_negatives = field<int>(hp, "random_negatives", c.hp.random_negatives);
  c.hp.repeats = field<int>(hp, "repeats", c.hp.repeats);
  c.hp.eval_fraction = field<double>(hp, "eval_fraction", c.hp.eval_fraction);
  c.hp.max_gen_tokens = field<int>(hp, "max_gen_tokens", c.hp.max_gen_tokens);
  c.hp.stop = field<std::string>(hp, "stop", c.hp.stop);

  const json feat = section(j, "features");
  c.features.dim = field<uint32_t>(feat, "dim", c.features.dim);
  c.features.word_unigrams = field<bool>(feat, "word_unigrams", c.features.word_unigrams);
  c.features.word_bigrams = field<bool>(feat, "word_bigrams", c.features.word_bigrams);
  c.features.char_trigrams = field<bool>(feat, "char_trigrams", c.features.char_trigrams);
  c.features.hash_seed = field<uint64_t>(feat, "hash_seed", c.features.hash_seed);

  const json lm = section(j, "lm");
  c.lm.backend = field<std::string>(lm, "backend", c.lm.backend);
  c.lm.remote.endpoint = field<std::string>(lm, "endpoint", c.lm.remote.endpoint);
  c.lm.remote.model = field<std::string>(lm, "model", c.lm.remote.model);
  c.lm.remote.path = field<std::string>(lm, "path", c.lm.remote.path);
  c.lm.remote.retries = field<int>(lm, "retries", c.lm.remote.retries);
  c.lm.remote.retry_backoff_ms = field<int>(lm, "retry_backoff_ms", c.lm.remote.retry_backoff_ms);
  c.lm.remote.timeout_s = field<int>(lm, "timeout_s", c.lm.remote.timeout_s);
  c.lm.max_context_chars = field<int>(lm, "max_context_chars", c.lm.max_context_chars);

  const json task = section(j, "task");
  c.task.attribute_count = field<int>(task, "attribute_count", c.task.attribute_count);
  c.task.pool_size = field<int>(task, "pool_size", c.task.pool_size);
  c.task.instance_count = field<int>(task, "instance_count", c.task.instance_count);
  c.task.noise = field<double>(task, "noise", c.task.noise);
  c.task.position_decay = field<double>(task, "position_decay", c.task.position_decay);
  c.task.kind = field<std::string>(task, "kind", c.task.kind);

  const json tmpl = section(j, "template");
  c.tmpl.task_id = field<std::string>(tmpl, "task_id", c.tmpl.task_id);
  c.tmpl.input_pattern = field<std::string>(tmpl, "input_pattern", c.tmpl.input_pattern);
  c.tmpl.output_pattern = field<std::string>(tmpl, "output_pattern", c.tmpl.output_pattern);
  c.tmpl.separator = field<std::string>(tmpl, "separator", c.tmpl.separator);
  return c;
}

RunConfig load_config(const std::string& path) {
  try {
    return config_from_json(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::data)
      throw Error(ErrorKind::config, "config " + path + ": " + e.what());
    throw Error(e.kind(), path + ": " + e.what());
  }
}

namespace {

json config_body(const RunConfig& c, bool with_paths) {
  json j;
  j["seed"] = c.seed;
  if (with_paths) {
    j["paths"] = {{"pool", c.paths.pool},       {"instances", c.paths.instances},
                  {"records", c.paths.records}, {"checkpoint", c.paths.checkpoint},
                  {"index", c.paths.index},     {"reports", c.paths.reports}};
  }
  j["hyperparams"] = {{"k", c.hp.k},
                      {"l", c.hp.l},
                      {"b", c.hp.b},
                      {"w", c.hp.w},
                      {"tau", c.hp.tau},
                      {"lr", c.hp.lr},
                      {"epochs", c.hp.epochs},
                      {"batch_size", c.hp.batch_size},
                      {"d", c.hp.d},
                      {"random_negatives", c.hp.random_negatives},
                      {"repeats", c.hp.repeats},
                      {"eval_fraction", c.hp.eval_fraction},
                      {"max_gen_tokens", c.hp.max_gen_tokens},
                      {"stop", c.hp.stop}};
  j["features"] = {{"dim", c.features.dim},
                   {"word_unigrams", c.features.word_unigrams},
                   {"word_bigrams", c.features.word_bigrams},
                   {"char_trigrams", c.features.char_trigrams},
                   {"hash_seed", c.features.hash_seed}};
  j["lm"] = {{"backend", c.lm.backend},
             {"endpoint", c.lm.remote.endpoint},
             {"model", c.lm.remote.model},
             {"path", c.lm.remote.path},
             {"retries", c.lm.remote.retries},
             {"retry_backoff_ms", c.lm.remote.retry_backoff_ms},
             {"timeout_s", c.lm.remote.timeout_s},
             {"max_context_chars", c.lm.max_context_chars}};
  j["task"] = {{"attribute_count", c.task.attribute_count},
               {"pool_size", c.task.pool_size},
               {"instance_count", c.task.instance_count},
               {"noise", c.task.noise},
               {"position_decay", c.task.position_decay},
               {"kind", c.task.kind}};
  j["template"] = {{"task_id", c.tmpl.task_id},
                   {"input_pattern", c.tmpl.input_pattern},
                   {"output_pattern", c.tmpl.output_pattern},
                   {"separator", c.tmpl.separator}};
  return j;
}

}  // namespace

std::string config_to_json(const RunConfig& config) {
  return config_body(config, /*with_paths=*/true).dump(2) + "\n";
}

void validate(const RunConfig& c) {
  require(c.hp.k >= 1, ErrorKind::config, "config: k must be >= 1");
  require(c.hp.l >= 1, ErrorKind::config, "config: l must be >= 1");
  require(c.hp.b >= 1 && c.hp.b <= c.hp.l, ErrorKind::config, "config: need 1 <= b <= l");
  require(c.hp.w >= 1, ErrorKind::config, "config: w must be >= 1");
  require(c.hp.lr > 0.0, ErrorKind::config, "config: lr must be positive");
  require(c.hp.epochs >= 1, ErrorKind::config, "config: epochs must be >= 1");
  require(c.hp.batch_size >= 1, ErrorKind::config, "config: batch_size must be >= 1");
  require(c.hp.d >= 1, ErrorKind::config, "config: d must be >= 1");
  require(c.hp.random_negatives >= 0, ErrorKind::config,
          "config: random_negatives must be >= 0");
  require(c.hp.repeats >= 1, ErrorKind::config, "config: repeats must be >= 1");
  require(c.hp.eval_fraction > 0.0 && c.hp.eval_fraction < 1.0, ErrorKind::config,
          "config: eval_fraction must be in (0,1)");
  require(c.hp.max_gen_tokens >= 0, ErrorKind::config, "config: max_gen_tokens must be >= 0");
  try {
    validate(c.features);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("config: ") + e.what());
  }
  require(c.lm.backend == "synthetic-oracle" || c.lm.backend == "remote", ErrorKind::config,
          "config: lm.backend must be 'synthetic-oracle' or 'remote'");
  if (c.lm.backend == "remote") {
    require(!c.lm.remote.endpoint.empty(), ErrorKind::config,
            "config: remote backend needs an endpoint (config, flag, or SEQSEL_LM_ENDPOINT)");
  }
  require(c.lm.max_context_chars >= 1, ErrorKind::config,
          "config: max_context_chars must be >= 1");
  require(c.task.attribute_count >= 2, ErrorKind::config,
          "config: task.attribute_count must be >= 2");
  require(c.task.pool_size >= c.task.attribute_count, ErrorKind::config,
          "config: task.pool_size must cover every attribute");
  require(c.task.instance_count >= 1, ErrorKind::config,
          "config: task.instance_count must be >= 1");
  require(c.task.noise >= 0.0 && c.task.noise < 1.0, ErrorKind::config,
          "config: task.noise must be in [0,1)");
  require(c.task.position_decay > 0.0 && c.task.position_decay <= 1.0, ErrorKind::config,
          "config: task.position_decay must be in (0,1]");
  task_kind_from_string(c.task.kind);
}

void apply_env_overrides(RunConfig& config) {
  if (const char* endpoint = std::getenv("SEQSEL_LM_ENDPOINT"); endpoint && *endpoint) {
    config.lm.remote.endpoint = endpoint;
  }
  if (const char* seed = std::getenv("SEQSEL_SEED"); seed && *seed) {
    try {
      config.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, std::string("SEQSEL_SEED: not an integer: ") + seed);
    }
  }
}

uint64_t config_hash(const RunConfig& config) {
  return fnv1a64(config_body(config, /*with_paths=*/false).dump());
}

TaskKind task_kind_from_string(std::string_view kind) {
  if (kind == "nlu") return TaskKind::NLU;
  if (kind == "nlg") return TaskKind::NLG;
  throw Error(ErrorKind::config, "task kind must be 'nlu' or 'nlg', got '" + std::string(kind) + "'");
}

SyntheticTaskSpec synthetic_spec_from(const RunConfig& config) {
  SyntheticTaskSpec spec;
  spec.seed = config.seed;
  spec.attribute_count = config.task.attribute_count;
  spec.pool_size = config.task.pool_size;
  spec.instance_count = config.task.instance_count;
  spec.noise = config.task.noise;
  spec.position_decay = config.task.position_decay;
  spec.kind = task_kind_from_string(config.task.kind);
  return spec;
}

LanguageModelHandle make_backend(const RunConfig& config) {
  LanguageModelHandle lm;
  if (config.lm.backend == "remote") {
    lm = LanguageModelHandle::make_remote(config.lm.remote);
  } else {
    AttributeOracleParams params;
    params.seed = derive_seed(config.seed, "oracle");
    params.attribute_count = config.task.attribute_count;
    params.noise = config.task.noise;
    params.position_decay = config.task.position_decay;
    params.kind = task_kind_from_string(config.task.kind);
    lm = LanguageModelHandle::make_oracle(std::make_shared<AttributeOracle>(params));
  }
  lm.max_context_chars = config.lm.max_context_chars;
  return lm;
}

}  // namespace seqsel
