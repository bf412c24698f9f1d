#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqsel/encoder.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// Exact (exhaustive) inner-product index over the example pool. Row i is the
// example-tower embedding of example_ids[i]; model_version ties the index to
// the weights that produced it.
struct DenseIndex {
  std::vector<std::string> example_ids;
  std::vector<double> matrix;  // n × d, row-major
  int d = 0;
  uint32_t model_version = 0;
  uint64_t config_hash = 0;

  size_t size() const { return example_ids.size(); }
};

DenseIndex build_index(const EncoderModel& model, const ExamplePool& pool);

// k highest inner products against `query`, excluding listed ids. Descending
// score, ties by ascending id; returns fewer than k when the pool runs out.
std::vector<std::pair<std::string, double>> top_k(const DenseIndex& index,
                                                  const std::vector<double>& query, int k,
                                                  const std::vector<std::string>& exclude);

// One candidate selection sequence during search. context_text is always the
// exact rendering of `selected` around the base input, i.e. the same string a
// construction run would have scored against.
struct BeamState {
  std::vector<std::string> selected;
  double cumulative_score = 0.0;
  std::string context_text;
};

// K steps of width-w beam search with additive raw inner-product scores:
// every beam proposes its top-w admissible examples, the global best w
// children survive (ties broken by the lexicographic selected-id list), each
// child re-renders its context with the new example in front. Returns the
// final beams best-first. w=1 is exactly iterated greedy retrieval.
std::vector<BeamState> beam_search(const std::string& input_text, int k, int w,
                                   const DenseIndex& index, const EncoderModel& model,
                                   const ExamplePool& pool, const TaskTemplate& tmpl);

// Top-1 beam as a prompt sequence over the given base input.
PromptSequence select_prompt(const std::vector<BeamState>& beams, std::string base_input);

void save_index(const DenseIndex& index, const std::string& path);
DenseIndex load_index(const std::string& path);

}  // namespace seqsel
