#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "seqsel/errors.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// Frozen scoring/inference model. Implementations must be deterministic:
// generation is greedy and loglikelihood is a pure function of its inputs.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  // Per-token log-probabilities of `continuation` conditioned on `context`.
  virtual std::vector<double> loglikelihood(const std::string& context,
                                            const std::string& continuation) = 0;

  // Greedy decoding; honors max_tokens and an optional stop string.
  virtual std::string generate(const std::string& context, int max_tokens,
                               const std::string& stop) = 0;

  virtual std::string backend_id() const = 0;
};

enum class LmBackend { remote, synthetic_oracle };
enum class Truncation { keep_head, keep_tail };

struct RemoteLmConfig {
  std::string endpoint;  // scheme://host:port
  std::string model;
  std::string path = "/v1/completions";
  int retries = 3;
  int retry_backoff_ms = 250;
  int timeout_s = 120;
};

// Value handle around exactly one configured backend. Over-long contexts are
// truncated here (default keeps the tail, nearest the test input) before the
// backend sees them.
struct LanguageModelHandle {
  LmBackend backend = LmBackend::synthetic_oracle;
  std::shared_ptr<LanguageModel> impl;
  int max_context_chars = 1 << 20;
  Truncation truncation = Truncation::keep_tail;

  static LanguageModelHandle make_remote(const RemoteLmConfig& config);
  static LanguageModelHandle make_oracle(std::shared_ptr<LanguageModel> oracle);
};

std::string truncate_context(std::string_view context, size_t max_chars, Truncation side);

std::vector<double> loglikelihood(const LanguageModelHandle& lm, std::string_view context,
                                  std::string_view continuation);
std::string generate(const LanguageModelHandle& lm, std::string_view context, int max_tokens,
                     std::string_view stop);

// --- synthetic oracles ------------------------------------------------------

// Uniform vocabulary: every token scores -ln(vocab_size); generates nothing.
class UniformOracle : public LanguageModel {
 public:
  explicit UniformOracle(size_t vocab_size);
  std::vector<double> loglikelihood(const std::string& context,
                                    const std::string& continuation) override;
  std::string generate(const std::string& context, int max_tokens,
                       const std::string& stop) override;
  std::string backend_id() const override;

 private:
  size_t vocab_size_;
};

// Fixed-output model: greedy generation always yields `payload`.
class EchoOracle : public LanguageModel {
 public:
  explicit EchoOracle(std::string payload);
  std::vector<double> loglikelihood(const std::string& context,
                                    const std::string& continuation) override;
  std::string generate(const std::string& context, int max_tokens,
                       const std::string& stop) override;
  std::string backend_id() const override;

 private:
  std::string payload_;
};

// Desk-scale stand-in for a real LLM on attribute tasks. Every pool example
// and test input carries a hidden attribute tag "@a<i>" in its text. Label
// logits are computed from the tags visible in the context:
//
//   logit_j = match_gain * [j == q] * n_q + distract_gain * n_j - noise * eta_j
//
// where q is the test input's tag (the last tag in the context), n_j the
// (optionally position-weighted) number of in-context example tags equal to
// j, and eta_j a deterministic per-(input, label) perturbation in [0,1).
// Likelihoods are the softmax of these logits, so the answer's likelihood
// grows with the number of attribute-matching demonstrations.
struct AttributeOracleParams {
  uint64_t seed = 0;
  int attribute_count = 8;
  double match_gain = 2.0;
  double distract_gain = 0.25;
  double noise = 0.0;
  double position_decay = 1.0;  // < 1 makes demonstration order matter
  TaskKind kind = TaskKind::NLU;
};

class AttributeOracle : public LanguageModel {
 public:
  explicit AttributeOracle(AttributeOracleParams params);

  std::vector<double> loglikelihood(const std::string& context,
                                    const std::string& continuation) override;
  std::string generate(const std::string& context, int max_tokens,
                       const std::string& stop) override;
  std::string backend_id() const override;

  static std::string tag(int attribute);          // "@a<i>"
  static std::string label_text(int attribute);   // single-token NLU label
  static std::string target_text(int attribute);  // multi-token NLG target

  const AttributeOracleParams& params() const { return params_; }

  // Softmax label probabilities for a context; exposed so tests can
  // re-derive expected scores independently of the scoring module.
  std::vector<double> label_probabilities(const std::string& context) const;

 private:
  int answer_attribute(const std::string& context) const;
  AttributeOracleParams params_;
};

// --- remote completion backend ---------------------------------------------

// Client for a completion endpoint that can return per-token log-probs for a
// caller-supplied continuation (echo-with-logprobs). Requests carry exactly
// {model, prompt, max_tokens, echo, logprobs, temperature} plus stop for
// generation; temperature is always 0.
class RemoteBackend : public LanguageModel {
 public:
  explicit RemoteBackend(RemoteLmConfig config);
  std::vector<double> loglikelihood(const std::string& context,
                                    const std::string& continuation) override;
  std::string generate(const std::string& context, int max_tokens,
                       const std::string& stop) override;
  std::string backend_id() const override;

 private:
  std::string post_completion(const std::string& body);
  RemoteLmConfig config_;
};

// Response parsing, separated out so recorded wire fixtures can be replayed
// byte-for-byte in tests. `context_chars` is the byte length of the context
// part of the echoed prompt; the continuation must begin exactly on a token
// boundary there, otherwise this raises a scoring error.
std::vector<double> parse_echo_logprobs(std::string_view response_body, size_t context_chars);
std::string parse_completion_text(std::string_view response_body);

}  // namespace seqsel
