#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqsel/prompt.hpp"
#include "seqsel/rouge.hpp"
#include "seqsel/scoring.hpp"

namespace seqsel {

double likelihood(const std::vector<double>& token_logprobs) {
  require(!token_logprobs.empty(), ErrorKind::invalid_argument,
          "likelihood: empty log-prob list");
  const double mean = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0) /
                      static_cast<double>(token_logprobs.size());
  return std::max(std::exp(mean), kLikelihoodFloor);
}

std::vector<double> label_likelihoods_for_context(const LanguageModelHandle& lm,
                                                  const DataInstance& instance,
                                                  const std::string& full_context,
                                                  const TaskTemplate& tmpl) {
  require(instance.task_kind == TaskKind::NLU, ErrorKind::invalid_argument,
          "label likelihoods are only defined for classification instances");
  validate_instance(instance);
  std::vector<double> out;
  out.reserve(instance.label_space.size());
  for (const auto& label : instance.label_space) {
    const std::string continuation = render_output_pattern(tmpl, label);
    out.push_back(likelihood(loglikelihood(lm, full_context, continuation)));
  }
  return out;
}

double score_nlu_for_context(const LanguageModelHandle& lm, const DataInstance& instance,
                             const std::string& full_context, const TaskTemplate& tmpl) {
  const auto lh = label_likelihoods_for_context(lm, instance, full_context, tmpl);
  const auto gold = std::find(instance.label_space.begin(), instance.label_space.end(),
                              instance.reference);
  const double total = std::accumulate(lh.begin(), lh.end(), 0.0);
  return lh[static_cast<size_t>(gold - instance.label_space.begin())] / total;
}

double score_nlg_for_context(const LanguageModelHandle& lm, const DataInstance& instance,
                             const std::string& full_context, const GenSettings& gen) {
  require(instance.task_kind == TaskKind::NLG, ErrorKind::invalid_argument,
          "generation scoring is only defined for generation instances");
  validate_instance(instance);
  const std::string hyp = generate(lm, full_context, gen.max_tokens, gen.stop);
  return rouge_l_f1(instance.reference, hyp);
}

std::vector<double> label_likelihoods(const LanguageModelHandle& lm, const DataInstance& instance,
                                      const std::string& context_prefix, const Example& example,
                                      const TaskTemplate& tmpl) {
  return label_likelihoods_for_context(lm, instance, extend_context(example, tmpl, context_prefix),
                                       tmpl);
}

double score_nlu(const LanguageModelHandle& lm, const DataInstance& instance,
                 const std::string& context_prefix, const Example& example,
                 const TaskTemplate& tmpl) {
  return score_nlu_for_context(lm, instance, extend_context(example, tmpl, context_prefix), tmpl);
}

double score_nlg(const LanguageModelHandle& lm, const DataInstance& instance,
                 const std::string& context_prefix, const Example& example,
                 const TaskTemplate& tmpl, const GenSettings& gen) {
  return score_nlg_for_context(lm, instance, extend_context(example, tmpl, context_prefix), gen);
}

double score_candidate(const LanguageModelHandle& lm, const DataInstance& instance,
                       const std::string& context_prefix, const Example& example,
                       const TaskTemplate& tmpl, const GenSettings& gen) {
  if (instance.task_kind == TaskKind::NLU) {
    return score_nlu(lm, instance, context_prefix, example, tmpl);
  }
  return score_nlg(lm, instance, context_prefix, example, tmpl, gen);
}

}  // namespace seqsel
