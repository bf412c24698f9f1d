#pragma once

#include <string>

#include "seqsel/evaluation.hpp"
#include "seqsel/featurize.hpp"
#include "seqsel/lm.hpp"

namespace seqsel {

struct RunPaths {
  std::string pool = "pool.jsonl";
  std::string instances = "instances.jsonl";
  std::string records = "records.jsonl";
  std::string checkpoint = "encoder.ckpt";
  std::string index = "pool.index";
  std::string reports = "reports.jsonl";
};

struct Hyperparams {
  int k = 3;   // shots
  int l = 50;  // candidates per construction step
  int b = 20;  // hard negatives
  int w = 3;   // beam width
  double tau = -1.0;  // positive threshold; negative = chance level
  double lr = 1e-2;
  int epochs = 5;
  int batch_size = 16;
  int d = 32;  // embedding dim
  int random_negatives = 20;
  int repeats = 10;  // random-baseline repeats
  double eval_fraction = 0.2;
  int max_gen_tokens = 64;
  std::string stop = "\n";
};

struct LmSettings {
  std::string backend = "synthetic-oracle";  // or "remote"
  RemoteLmConfig remote;
  int max_context_chars = 1 << 20;
};

// Synthetic benchmark shape; also parameterizes the synthetic-oracle backend
// (its rng stream is derived from the root seed).
struct TaskSettings {
  int attribute_count = 8;
  int pool_size = 64;
  int instance_count = 32;
  double noise = 0.0;
  double position_decay = 1.0;
  std::string kind = "nlu";
};

struct RunConfig {
  uint64_t seed = 0;
  RunPaths paths;
  Hyperparams hp;
  FeatConfig features;
  LmSettings lm;
  TaskSettings task;
  TaskTemplate tmpl;  // used by file-based commands; synthetic tasks carry their own
};

RunConfig config_from_json(std::string_view text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& config);
void validate(const RunConfig& config);

// Applies SEQSEL_LM_ENDPOINT and SEQSEL_SEED when present. Flags are applied
// by the caller afterwards, so the precedence is flags > env > file.
void apply_env_overrides(RunConfig& config);

// Hash of everything that affects computation. Paths are deliberately
// excluded: two runs into different directories are the same experiment.
uint64_t config_hash(const RunConfig& config);

TaskKind task_kind_from_string(std::string_view kind);
SyntheticTaskSpec synthetic_spec_from(const RunConfig& config);
LanguageModelHandle make_backend(const RunConfig& config);

}  // namespace seqsel
