#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqsel/retrieval.hpp"
#include "seqsel/scoring.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// Synthetic attribute-matching benchmark. Every pool example and every test
// instance carries a hidden attribute surfaced by an "@a<i>" tag in its text;
// the bundled oracle LM answers better the more in-context examples share the
// instance's attribute. The optimum is brute-forceable on small pools.
struct SyntheticTaskSpec {
  uint64_t seed = 0;
  int attribute_count = 8;
  int pool_size = 64;
  int instance_count = 32;
  double noise = 0.0;        // in [0,1)
  double position_decay = 1.0;  // <1 makes the oracle order-sensitive
  TaskKind kind = TaskKind::NLU;
};

struct SyntheticTask {
  SyntheticTaskSpec spec;
  std::string task_id;
  ExamplePool pool;
  std::vector<DataInstance> instances;
  LanguageModelHandle oracle;
  TaskTemplate tmpl;
};

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec);

enum class EvalMethod { zero_shot, random, best_of_n, similarity, greedy, beam_top1, beam_avg };
std::string to_string(EvalMethod method);
EvalMethod eval_method_from_string(std::string_view name);

struct EvalReport {
  std::string task_id;
  EvalMethod method = EvalMethod::zero_shot;
  std::string metric_name;  // "accuracy" or "rouge_l_f1"
  double value = 0.0;
  int n_seeds = 1;
  double stddev = 0.0;
};

// Task metric of one prompt: classification accuracy (argmax label) or
// Rouge-L F1 of the greedy generation.
double evaluate_selection(const SyntheticTask& task, const DataInstance& instance,
                          const std::vector<std::string>& selected, const GenSettings& gen = {});

EvalReport run_zero_shot(const SyntheticTask& task, const GenSettings& gen = {});

// Uniform K-shot prompts drawn fresh per instance, `repeats` times; returns
// the mean-over-repeats ("random") and max-over-repeats ("best_of_n")
// reports. stddev is across repeats.
std::pair<EvalReport, EvalReport> run_baseline_random(const SyntheticTask& task, int k,
                                                      int repeats, uint64_t seed,
                                                      const GenSettings& gen = {});

// Raw hashed-feature cosine retrieval, no trained weights. Top-K most similar
// examples, most similar placed nearest the input.
EvalReport run_similarity_baseline(const SyntheticTask& task, int k,
                                   const FeatConfig& feat_config, const GenSettings& gen = {});

// Trained-selector evaluation: beam_top1 (best beam), beam_avg (metric
// averaged over all returned beams per instance), greedy (w=1).
std::vector<EvalReport> run_pipeline_eval(const SyntheticTask& task, const EncoderModel& model,
                                          int k, int w, const GenSettings& gen = {});

struct PermutationReport {
  double original_mean = 0.0;
  double permutation_mean = 0.0;
  double max_spread = 0.0;  // max over sequences of (best - worst ordering)
  size_t sequences = 0;
  size_t orderings = 0;
};

// Metric of each given (instance, selection) under its original order vs all
// orderings of the same examples.
PermutationReport permutation_study(
    const SyntheticTask& task,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sequences,
    const GenSettings& gen = {});

// Deterministic prefix/suffix split (no shuffling; instances are already
// i.i.d. by construction).
struct InstanceSplit {
  std::vector<DataInstance> train;
  std::vector<DataInstance> eval;
};
InstanceSplit split_instances(const std::vector<DataInstance>& all, double eval_fraction);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view line);
void save_reports(const std::vector<EvalReport>& reports, const std::string& path);
std::vector<EvalReport> load_reports(const std::string& path);

// Aligned-column text table for terminal output.
std::string format_report_table(const std::vector<EvalReport>& reports);

}  // namespace seqsel
