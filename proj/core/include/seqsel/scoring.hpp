#pragma once

#include <string>
#include <vector>

#include "seqsel/lm.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// One candidate's utility for the current (instance, context). Within a scored
// set, ranks are a permutation of 1..L and score is non-increasing in rank.
struct CandidateScore {
  std::string example_id;
  double score = 0.0;
  int rank = 0;  // 1 = best
};

struct GenSettings {
  int max_tokens = 64;
  std::string stop = "\n";
};

// Floor applied to exp(mean log-prob) so a degenerate backend that drives a
// label to probability zero cannot produce 0/0 during normalization.
inline constexpr double kLikelihoodFloor = 1e-30;

// Length-normalized likelihood: exp(arithmetic mean of token log-probs).
double likelihood(const std::vector<double>& token_logprobs);

// Likelihood of each label's rendered continuation given a complete context
// (demonstrations + test input, ready for the answer). Order follows
// instance.label_space.
std::vector<double> label_likelihoods_for_context(const LanguageModelHandle& lm,
                                                  const DataInstance& instance,
                                                  const std::string& full_context,
                                                  const TaskTemplate& tmpl);

// Classification utility of a complete context: gold-label likelihood
// normalized over the label space. In (0,1]; sums to 1 across gold choices.
double score_nlu_for_context(const LanguageModelHandle& lm, const DataInstance& instance,
                             const std::string& full_context, const TaskTemplate& tmpl);

// Generation utility of a complete context: Rouge-L F1 of the greedy
// completion against the instance reference. Empty generations score 0.
double score_nlg_for_context(const LanguageModelHandle& lm, const DataInstance& instance,
                             const std::string& full_context, const GenSettings& gen = {});

// Candidate-conditioned variants: the candidate example is prepended to the
// current context (x <- e (+) x) before scoring.
std::vector<double> label_likelihoods(const LanguageModelHandle& lm, const DataInstance& instance,
                                      const std::string& context_prefix, const Example& example,
                                      const TaskTemplate& tmpl);
double score_nlu(const LanguageModelHandle& lm, const DataInstance& instance,
                 const std::string& context_prefix, const Example& example,
                 const TaskTemplate& tmpl);
double score_nlg(const LanguageModelHandle& lm, const DataInstance& instance,
                 const std::string& context_prefix, const Example& example,
                 const TaskTemplate& tmpl, const GenSettings& gen = {});

// Dispatch on instance.task_kind.
double score_candidate(const LanguageModelHandle& lm, const DataInstance& instance,
                       const std::string& context_prefix, const Example& example,
                       const TaskTemplate& tmpl, const GenSettings& gen = {});

}  // namespace seqsel
