#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqsel/rng.hpp"
#include "seqsel/scoring.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// One step of the construction loop for one instance: the candidate set with
// its scores, and the candidate actually drawn.
struct TrainingRecord {
  std::string instance_id;
  int step = 1;                               // 1-based
  std::vector<std::string> selected_so_far;   // chosen ids of steps 1..step-1
  std::vector<CandidateScore> candidates;     // sorted by rank
  std::string chosen_id;
};

struct RankDistribution {
  int l = 1;
  std::vector<double> probabilities;  // strictly decreasing, sums to 1
};

// Softmax over negated ranks. The exponent base (ranks 1..L vs 0..L-1) does
// not matter: the shared max-subtraction normalization makes both bit-equal.
RankDistribution rank_probabilities(int l, int first_rank = 1);

// Draw a 1-based rank from the distribution.
int draw_rank(const RankDistribution& dist, Rng& rng);

// Uniform sample of `l` distinct examples, none with an id in `exclude`.
std::vector<Example> sample_candidates(const ExamplePool& pool, int l, Rng& rng,
                                       const std::vector<std::string>& exclude);

// Score every candidate against the current context and assign ranks
// (descending score, ties by ascending id).
std::vector<CandidateScore> score_and_rank(const LanguageModelHandle& lm,
                                           const DataInstance& instance,
                                           const std::string& current_context_prefix,
                                           const std::vector<Example>& candidates,
                                           const TaskTemplate& tmpl,
                                           const GenSettings& gen = {});

struct ConstructionParams {
  int k = 3;   // sequence length (shots)
  int l = 50;  // candidates per step
  GenSettings gen;
};

// Full construction loop for one instance: K rounds of sample / score /
// rank-softmax draw / context extension. Previously chosen examples and the
// instance itself (by id) are excluded from later candidate draws.
std::vector<TrainingRecord> construct_records(const LanguageModelHandle& lm,
                                              const DataInstance& instance,
                                              const ExamplePool& pool,
                                              const ConstructionParams& params, Rng& rng,
                                              const TaskTemplate& tmpl);

struct SkippedInstance {
  std::string instance_id;
  std::string reason;
};

struct CorpusResult {
  std::vector<TrainingRecord> records;  // grouped by instance, steps in order
  std::vector<SkippedInstance> skipped;
};

using ProgressFn = std::function<void(const std::string& instance_id, size_t done, size_t total)>;

// Corpus-level driver. Each instance gets its own rng stream derived from
// (seed, instance id), so results are byte-identical for any `jobs`. Backend
// failures skip the instance; structural errors propagate.
CorpusResult construct_corpus(const LanguageModelHandle& lm,
                              const std::vector<DataInstance>& instances, const ExamplePool& pool,
                              const ConstructionParams& params, uint64_t seed,
                              const TaskTemplate& tmpl, int jobs = 1,
                              const ProgressFn& progress = nullptr);

}  // namespace seqsel
