#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "seqsel/binio.hpp"
#include "seqsel/encoder.hpp"
#include "seqsel/hash.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"

namespace seqsel {

namespace {

constexpr double kInitScale = 0.1;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

size_t weight_count(const EncoderModel& model) {
  return static_cast<size_t>(model.feat_config.dim) * static_cast<size_t>(model.d);
}

}  // namespace

EncoderModel init_model(const FeatConfig& feat_config, int d, uint64_t seed) {
  validate(feat_config);
  require(d >= 1, ErrorKind::invalid_argument, "init_model: embedding dim must be >= 1");
  EncoderModel model;
  model.feat_config = feat_config;
  model.d = d;
  model.w_x.resize(weight_count(model));
  model.w_e.resize(weight_count(model));
  Rng rng_x(derive_seed(seed, "init/w_x"));
  Rng rng_e(derive_seed(seed, "init/w_e"));
  for (double& w : model.w_x) w = kInitScale * rng_x.next_normal();
  for (double& w : model.w_e) w = kInitScale * rng_e.next_normal();
  return model;
}

void validate_model(const EncoderModel& model) {
  validate(model.feat_config);
  require(model.d >= 1, ErrorKind::model, "model: embedding dim must be >= 1");
  require(model.w_x.size() == weight_count(model) && model.w_e.size() == weight_count(model),
          ErrorKind::model, "model: weight shape does not match feat_config.dim x d");
  for (const auto* tower : {&model.w_x, &model.w_e}) {
    for (double w : *tower)
      require(std::isfinite(w), ErrorKind::model, "model: non-finite weight");
  }
}

uint32_t model_content_version(const EncoderModel& model) {
  uint64_t h = fnv1a64_u64(model.feat_config.dim);
  h = fnv1a64_u64(static_cast<uint64_t>(model.feat_config.word_unigrams), h);
  h = fnv1a64_u64(static_cast<uint64_t>(model.feat_config.word_bigrams), h);
  h = fnv1a64_u64(static_cast<uint64_t>(model.feat_config.char_trigrams), h);
  h = fnv1a64_u64(model.feat_config.hash_seed, h);
  h = fnv1a64_u64(static_cast<uint64_t>(model.d), h);
  for (double w : model.w_x) h = fnv1a64_u64(std::bit_cast<uint64_t>(w), h);
  for (double w : model.w_e) h = fnv1a64_u64(std::bit_cast<uint64_t>(w), h);
  return static_cast<uint32_t>(h & 0xffffffffULL);
}

std::string example_text(const Example& example) {
  return example.input_text + "\n" + example.output_text;
}

std::vector<double> encode_features(const EncoderModel& model, const SparseVec& features,
                                    bool input_tower) {
  const std::vector<double>& w = input_tower ? model.w_x : model.w_e;
  require(w.size() == weight_count(model), ErrorKind::model, "encode: weight shape mismatch");
  std::vector<double> out(static_cast<size_t>(model.d), 0.0);
  const size_t d = static_cast<size_t>(model.d);
  for (size_t i = 0; i < features.nnz(); ++i) {
    require(features.idx[i] < model.feat_config.dim, ErrorKind::model,
            "encode: feature index exceeds model dimension");
    const double v = features.val[i];
    const double* row = w.data() + static_cast<size_t>(features.idx[i]) * d;
    for (size_t j = 0; j < d; ++j) out[j] += v * row[j];
  }
  return out;
}

std::vector<double> encode_input(const EncoderModel& model, std::string_view text) {
  return encode_features(model, featurize(text, model.feat_config), /*input_tower=*/true);
}

std::vector<double> encode_example(const EncoderModel& model, const Example& example) {
  return encode_features(model, featurize(example_text(example), model.feat_config),
                         /*input_tower=*/false);
}

double inner(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::model, "inner: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::optional<ContrastiveBatch> mine_positive_negatives(const TrainingRecord& record,
                                                        const DataInstance& instance,
                                                        const ExamplePool& pool,
                                                        const TaskTemplate& tmpl,
                                                        const TrainConfig& config, Rng& rng) {
  require(!record.candidates.empty(), ErrorKind::invalid_argument,
          "mine: record has no candidates");
  require(config.b >= 1, ErrorKind::invalid_argument, "mine: B must be >= 1");
  require(record.instance_id == instance.id, ErrorKind::invalid_argument,
          "mine: record/instance mismatch");

  const CandidateScore& top = record.candidates.front();
  require(top.rank == 1, ErrorKind::invalid_argument, "mine: candidates not sorted by rank");

  double threshold = config.positive_threshold;
  if (threshold < 0.0) {
    threshold = instance.task_kind == TaskKind::NLU
                    ? 1.0 / static_cast<double>(instance.label_space.size())
                    : 0.0;
  }
  if (top.score <= threshold) return std::nullopt;

  ContrastiveBatch batch;
  batch.instance_id = record.instance_id;
  batch.step = record.step;
  batch.positive_id = top.example_id;

  const size_t l = record.candidates.size();
  const size_t hard = std::min(static_cast<size_t>(config.b), l - 1);
  for (size_t i = l - hard; i < l; ++i)
    batch.negative_ids.push_back(record.candidates[i].example_id);

  if (config.random_negative_count > 0) {
    std::vector<std::string> exclude = batch.negative_ids;
    exclude.push_back(batch.positive_id);
    exclude.push_back(instance.id);
    const auto extra =
        sample_candidates(pool, config.random_negative_count, rng, exclude);
    for (const Example& e : extra) batch.negative_ids.push_back(e.id);
  }
  require(!batch.negative_ids.empty(), ErrorKind::invalid_argument,
          "mine: empty negative set (L=1 with no random negatives)");

  const PromptSequence seq{record.selected_so_far,
                           render_input_pattern(tmpl, instance.input_text)};
  batch.anchor = featurize(render_prompt(seq, tmpl, pool), config.feat_config);
  batch.positive = featurize(example_text(pool.get(batch.positive_id)), config.feat_config);
  batch.negatives.reserve(batch.negative_ids.size());
  for (const auto& id : batch.negative_ids)
    batch.negatives.push_back(featurize(example_text(pool.get(id)), config.feat_config));
  return batch;
}

namespace {

void validate_batch(const ContrastiveBatch& batch) {
  require(!batch.negatives.empty(), ErrorKind::invalid_argument, "batch: needs >= 1 negative");
  require(batch.negatives.size() == batch.negative_ids.size(), ErrorKind::invalid_argument,
          "batch: negative ids and vectors disagree");
  for (const auto& id : batch.negative_ids)
    require(id != batch.positive_id, ErrorKind::invalid_argument,
            "batch: positive appears among negatives");
}

// Adds this batch's gradient into the dense accumulators and returns its
// loss. Shared by the public single-batch API and the training loop.
double accumulate_loss_grad(const EncoderModel& model, const ContrastiveBatch& batch,
                            std::vector<double>& grad_x, std::vector<double>& grad_e) {
  validate_batch(batch);
  const size_t d = static_cast<size_t>(model.d);

  const std::vector<double> vx = encode_features(model, batch.anchor, /*input_tower=*/true);
  std::vector<std::vector<double>> emb;
  emb.reserve(1 + batch.negatives.size());
  emb.push_back(encode_features(model, batch.positive, /*input_tower=*/false));
  for (const SparseVec& n : batch.negatives)
    emb.push_back(encode_features(model, n, /*input_tower=*/false));

  std::vector<double> logits(emb.size());
  for (size_t j = 0; j < emb.size(); ++j) logits[j] = inner(vx, emb[j]);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double s : logits) denom += std::exp(s - max_logit);
  const double lse = max_logit + std::log(denom);
  const double loss = lse - logits[0];

  // dL/ds_j = softmax_j - [j == positive]
  std::vector<double> coeff(emb.size());
  for (size_t j = 0; j < emb.size(); ++j)
    coeff[j] = std::exp(logits[j] - lse) - (j == 0 ? 1.0 : 0.0);

  std::vector<double> g_vx(d, 0.0);
  for (size_t j = 0; j < emb.size(); ++j)
    for (size_t k = 0; k < d; ++k) g_vx[k] += coeff[j] * emb[j][k];

  for (size_t i = 0; i < batch.anchor.nnz(); ++i) {
    double* row = grad_x.data() + static_cast<size_t>(batch.anchor.idx[i]) * d;
    const double v = batch.anchor.val[i];
    for (size_t k = 0; k < d; ++k) row[k] += v * g_vx[k];
  }
  auto add_example_grad = [&](const SparseVec& feat, double c) {
    for (size_t i = 0; i < feat.nnz(); ++i) {
      double* row = grad_e.data() + static_cast<size_t>(feat.idx[i]) * d;
      const double v = feat.val[i];
      for (size_t k = 0; k < d; ++k) row[k] += c * v * vx[k];
    }
  };
  add_example_grad(batch.positive, coeff[0]);
  for (size_t j = 0; j < batch.negatives.size(); ++j)
    add_example_grad(batch.negatives[j], coeff[j + 1]);
  return loss;
}

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::vector<double>& w, const std::vector<double>& g, AdamState& state,
               double lr, int t) {
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (size_t i = 0; i < w.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

}  // namespace

std::pair<double, EncoderGrad> infonce_loss_and_grad(const EncoderModel& model,
                                                     const ContrastiveBatch& batch) {
  EncoderGrad grad;
  grad.w_x.assign(weight_count(model), 0.0);
  grad.w_e.assign(weight_count(model), 0.0);
  const double loss = accumulate_loss_grad(model, batch, grad.w_x, grad.w_e);
  return {loss, std::move(grad)};
}

TrainResult train(const std::vector<TrainingRecord>& records,
                  const std::vector<DataInstance>& instances, const ExamplePool& pool,
                  const TaskTemplate& tmpl, const TrainConfig& config) {
  require(config.epochs >= 1, ErrorKind::invalid_argument, "train: epochs must be >= 1");
  require(config.batch_size >= 1, ErrorKind::invalid_argument, "train: batch_size must be >= 1");
  require(config.learning_rate > 0.0, ErrorKind::invalid_argument,
          "train: learning rate must be positive");

  std::unordered_map<std::string, const DataInstance*> by_id;
  for (const DataInstance& inst : instances) by_id[inst.id] = &inst;

  // Canonical order decouples the result from the input record order.
  std::vector<const TrainingRecord*> sorted;
  sorted.reserve(records.size());
  for (const TrainingRecord& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const TrainingRecord* a, const TrainingRecord* b) {
    if (a->instance_id != b->instance_id) return a->instance_id < b->instance_id;
    return a->step < b->step;
  });

  TrainResult result;
  std::vector<ContrastiveBatch> batches;
  batches.reserve(sorted.size());
  for (const TrainingRecord* record : sorted) {
    const auto it = by_id.find(record->instance_id);
    require(it != by_id.end(), ErrorKind::data,
            "train: record references unknown instance " + record->instance_id);
    Rng rng(derive_seed(config.seed,
                        "mine/" + record->instance_id + "/" + std::to_string(record->step)));
    auto mined = mine_positive_negatives(*record, *it->second, pool, tmpl, config, rng);
    if (mined) {
      batches.push_back(std::move(*mined));
    } else {
      ++result.filtered;
    }
  }
  result.mined = batches.size();
  if (batches.empty()) {
    throw Error(ErrorKind::empty_training_set,
                "train: every record was filtered (no usable positives)");
  }

  EncoderModel model = init_model(config.feat_config, config.d, derive_seed(config.seed, "init"));
  const size_t n_weights = weight_count(model);
  AdamState adam_x(n_weights), adam_e(n_weights);
  std::vector<double> grad_x(n_weights, 0.0), grad_e(n_weights, 0.0);
  int t = 0;

  std::vector<size_t> order(batches.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      const size_t j = i + shuffle_rng.next_below(order.size() - i);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t end = std::min(cursor + static_cast<size_t>(config.batch_size), order.size());
      std::fill(grad_x.begin(), grad_x.end(), 0.0);
      std::fill(grad_e.begin(), grad_e.end(), 0.0);
      for (size_t i = cursor; i < end; ++i)
        epoch_loss += accumulate_loss_grad(model, batches[order[i]], grad_x, grad_e);
      const double scale = 1.0 / static_cast<double>(end - cursor);
      for (double& g : grad_x) g *= scale;
      for (double& g : grad_e) g *= scale;
      ++t;
      adam_step(model.w_x, grad_x, adam_x, config.learning_rate, t);
      adam_step(model.w_e, grad_e, adam_e, config.learning_rate, t);
      cursor = end;
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches.size()));
  }

  model.version = model_content_version(model);
  result.model = std::move(model);
  return result;
}

namespace {

SparseVec random_sparse(uint32_t dim, size_t nnz, Rng& rng) {
  std::map<uint32_t, double> entries;
  while (entries.size() < nnz) {
    entries.emplace(static_cast<uint32_t>(rng.next_below(dim)), 0.0);
  }
  SparseVec v;
  double norm2 = 0.0;
  for (auto& [idx, val] : entries) {
    val = rng.next_normal();
    norm2 += val * val;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (const auto& [idx, val] : entries) {
    v.idx.push_back(idx);
    v.val.push_back(val * inv);
  }
  return v;
}

}  // namespace

GradCheckResult gradient_check(uint64_t seed, int trials) {
  require(trials >= 1, ErrorKind::invalid_argument, "gradient_check: trials must be >= 1");
  constexpr uint32_t kDim = 64;
  constexpr int kD = 8;
  constexpr size_t kNegatives = 20;
  constexpr double kH = 1e-5;
  FeatConfig feat;
  feat.dim = kDim;

  GradCheckResult result;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, "gradcheck/" + std::to_string(trial)));
    EncoderModel model = init_model(feat, kD, rng.next_u64());

    ContrastiveBatch batch;
    batch.instance_id = "gc";
    batch.positive_id = "pos";
    batch.anchor = random_sparse(kDim, 8, rng);
    batch.positive = random_sparse(kDim, 8, rng);
    for (size_t n = 0; n < kNegatives; ++n) {
      batch.negative_ids.push_back("neg" + std::to_string(n));
      batch.negatives.push_back(random_sparse(kDim, 8, rng));
    }

    const auto [loss, grad] = infonce_loss_and_grad(model, batch);
    (void)loss;

    // probe only coordinates the batch can touch; everything else is
    // exactly zero in both the analytic and the numeric gradient
    std::vector<std::pair<bool, size_t>> touched;  // (input tower?, flat index)
    for (uint32_t f : batch.anchor.idx)
      for (int j = 0; j < kD; ++j) touched.emplace_back(true, f * kD + static_cast<size_t>(j));
    auto add_tower_e = [&](const SparseVec& v) {
      for (uint32_t f : v.idx)
        for (int j = 0; j < kD; ++j) touched.emplace_back(false, f * kD + static_cast<size_t>(j));
    };
    add_tower_e(batch.positive);
    for (const SparseVec& n : batch.negatives) add_tower_e(n);

    for (int probe = 0; probe < 100; ++probe) {
      const auto [input_tower, flat] = touched[rng.next_below(touched.size())];
      std::vector<double>& w = input_tower ? model.w_x : model.w_e;
      const double saved = w[flat];
      w[flat] = saved + kH;
      const double up = infonce_loss_and_grad(model, batch).first;
      w[flat] = saved - kH;
      const double down = infonce_loss_and_grad(model, batch).first;
      w[flat] = saved;
      const double numeric = (up - down) / (2.0 * kH);
      const double analytic = input_tower ? grad.w_x[flat] : grad.w_e[flat];
      // The 1e-4 floor keeps central-difference roundoff (~1e-10 at this
      // loss scale) from dominating near-zero coordinates: below the floor
      // the check degrades to |analytic - numeric| < 1e-8 absolute.
      const double rel =
          std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coordinates;
    }
  }
  return result;
}

namespace {

constexpr std::string_view kCheckpointMagic = "SQSL";
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const EncoderModel& model, const std::string& path) {
  validate_model(model);
  std::string out;
  out.reserve(16 + 2 * model.w_x.size() * 8);
  out.append(kCheckpointMagic);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, model.feat_config.dim);
  binio::put_u32(out, static_cast<uint32_t>(model.d));
  uint32_t feat_flags = 0;
  if (model.feat_config.word_unigrams) feat_flags |= 1u;
  if (model.feat_config.word_bigrams) feat_flags |= 2u;
  if (model.feat_config.char_trigrams) feat_flags |= 4u;
  binio::put_u32(out, feat_flags);
  binio::put_u64(out, model.feat_config.hash_seed);
  binio::put_u32(out, model.version);
  binio::put_u64(out, model.config_hash);
  binio::put_u64(out, model.w_x.size());
  for (double w : model.w_x) binio::put_f64(out, w);
  binio::put_u64(out, model.w_e.size());
  for (double w : model.w_e) binio::put_f64(out, w);
  binio::put_u64(out, fnv1a64(out));
  atomic_write_file(path, out);
}

EncoderModel load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  require(bytes.size() > 8, ErrorKind::model, "checkpoint " + path + ": truncated container");
  const uint64_t want = fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8));
  binio::Reader tail(std::string_view(bytes).substr(bytes.size() - 8), "checkpoint " + path);
  require(tail.u64() == want, ErrorKind::model, "checkpoint " + path + ": checksum mismatch");

  binio::Reader in(std::string_view(bytes).substr(0, bytes.size() - 8), "checkpoint " + path);
  in.expect_magic(kCheckpointMagic);
  require(in.u32() == kCheckpointVersion, ErrorKind::model,
          "checkpoint " + path + ": unsupported container version");
  EncoderModel model;
  model.feat_config.dim = in.u32();
  model.d = static_cast<int>(in.u32());
  const uint32_t feat_flags = in.u32();
  model.feat_config.word_unigrams = (feat_flags & 1u) != 0;
  model.feat_config.word_bigrams = (feat_flags & 2u) != 0;
  model.feat_config.char_trigrams = (feat_flags & 4u) != 0;
  model.feat_config.hash_seed = in.u64();
  model.version = in.u32();
  model.config_hash = in.u64();
  const uint64_t nx = in.u64();
  require(nx == weight_count(model), ErrorKind::model,
          "checkpoint " + path + ": w_x size disagrees with header");
  model.w_x.resize(nx);
  for (double& w : model.w_x) w = in.f64();
  const uint64_t ne = in.u64();
  require(ne == weight_count(model), ErrorKind::model,
          "checkpoint " + path + ": w_e size disagrees with header");
  model.w_e.resize(ne);
  for (double& w : model.w_e) w = in.f64();
  require(in.done(), ErrorKind::model, "checkpoint " + path + ": trailing bytes");
  require(model_content_version(model) == model.version, ErrorKind::model,
          "checkpoint " + path + ": stored version disagrees with content");
  validate_model(model);
  return model;
}

}  // namespace seqsel
