#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqsel/construction.hpp"
#include "seqsel/featurize.hpp"
#include "seqsel/rng.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// Two linear towers over hashed features: inputs go through w_x, pool
// examples through w_e. Inner products of the two embeddings are the
// retrieval scores. `version` identifies the weights (low 32 bits of the
// content hash); `config_hash` records the producing run config.
struct EncoderModel {
  FeatConfig feat_config;
  int d = 32;
  uint32_t version = 0;
  uint64_t config_hash = 0;
  std::vector<double> w_x;  // feat_config.dim × d, row-major
  std::vector<double> w_e;
};

EncoderModel init_model(const FeatConfig& feat_config, int d, uint64_t seed);
void validate_model(const EncoderModel& model);
uint32_t model_content_version(const EncoderModel& model);

// Text an example is embedded from: input and output joined by a newline.
std::string example_text(const Example& example);

std::vector<double> encode_input(const EncoderModel& model, std::string_view text);
std::vector<double> encode_example(const EncoderModel& model, const Example& example);
std::vector<double> encode_features(const EncoderModel& model, const SparseVec& features,
                                    bool input_tower);
double inner(const std::vector<double>& a, const std::vector<double>& b);

// One contrastive training item, already featurized. The anchor is the
// instance's context at the record's step (previously selected demonstrations
// plus the rendered test input), the positive is the step's rank-1 candidate,
// negatives are the bottom-B candidates plus optional uniform pool draws.
struct ContrastiveBatch {
  std::string instance_id;
  int step = 1;
  SparseVec anchor;
  SparseVec positive;
  std::vector<SparseVec> negatives;
  std::string positive_id;
  std::vector<std::string> negative_ids;
};

struct TrainConfig {
  FeatConfig feat_config;
  int d = 32;
  int b = 20;                      // hard negatives from the record's bottom ranks
  int random_negative_count = 20;  // extra uniform pool negatives
  double learning_rate = 1e-2;
  int epochs = 5;
  int batch_size = 16;
  uint64_t seed = 0;
  // Records whose top-1 score is <= this are dropped. Negative means auto:
  // chance level 1/|labels| for classification, 0 for generation.
  double positive_threshold = -1.0;
};

// nullopt = record filtered (its best candidate never beat the threshold, so
// it carries no usable preference signal). Hard negatives are the bottom
// min(b, L-1) ranked candidates; random negatives are drawn uniformly from
// the pool excluding the instance, the positive, and negatives already taken,
// so the final set is duplicate-free.
std::optional<ContrastiveBatch> mine_positive_negatives(const TrainingRecord& record,
                                                        const DataInstance& instance,
                                                        const ExamplePool& pool,
                                                        const TaskTemplate& tmpl,
                                                        const TrainConfig& config, Rng& rng);

struct EncoderGrad {
  std::vector<double> w_x;
  std::vector<double> w_e;
};

// Softmax cross-entropy of the positive against positive+negatives under
// inner-product logits (temperature 1, no in-batch negatives). The gradient
// is exact and dense, accumulated through the sparse feature rows.
std::pair<double, EncoderGrad> infonce_loss_and_grad(const EncoderModel& model,
                                                     const ContrastiveBatch& batch);

struct TrainResult {
  EncoderModel model;
  std::vector<double> epoch_mean_loss;
  size_t mined = 0;
  size_t filtered = 0;
};

// Adam-driven mini-batch training over mined batches. Records are sorted
// canonically by (instance_id, step) and every random draw runs on a labeled
// sub-stream, so the result is byte-identical for any input record order and
// any mining parallelism.
TrainResult train(const std::vector<TrainingRecord>& records,
                  const std::vector<DataInstance>& instances, const ExamplePool& pool,
                  const TaskTemplate& tmpl, const TrainConfig& config);

void save_checkpoint(const EncoderModel& model, const std::string& path);
EncoderModel load_checkpoint(const std::string& path);

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t coordinates = 0;
};

// Central finite differences (h=1e-5) against the analytic gradient on
// randomized small models (64 features, d=8, 20 negatives), sampling 100
// touched coordinates per trial.
GradCheckResult gradient_check(uint64_t seed, int trials);

}  // namespace seqsel
