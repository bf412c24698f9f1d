#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqsel/featurize.hpp"
#include "seqsel/hash.hpp"
#include "seqsel/lm.hpp"

namespace seqsel {

namespace {

constexpr double kUnknownTokenLogProb = -18.420680743952367;  // ln(1e-8)

// Truncate to at most max_tokens whitespace tokens, preserving the original
// spacing of the kept prefix.
std::string truncate_tokens(const std::string& text, int max_tokens) {
  if (max_tokens < 0) return text;
  int count = 0;
  size_t i = 0;
  size_t kept_end = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    if (count == max_tokens) return text.substr(0, kept_end);
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    kept_end = i;
    ++count;
  }
  return text;
}

std::string apply_stop(std::string text, std::string_view stop) {
  if (stop.empty()) return text;
  const size_t pos = text.find(stop);
  if (pos != std::string::npos) text.resize(pos);
  return text;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

LanguageModelHandle LanguageModelHandle::make_remote(const RemoteLmConfig& config) {
  require(!config.endpoint.empty(), ErrorKind::config, "remote backend: endpoint must be set");
  LanguageModelHandle handle;
  handle.backend = LmBackend::remote;
  handle.impl = std::make_shared<RemoteBackend>(config);
  return handle;
}

LanguageModelHandle LanguageModelHandle::make_oracle(std::shared_ptr<LanguageModel> oracle) {
  require(oracle != nullptr, ErrorKind::config, "oracle backend: oracle must be set");
  LanguageModelHandle handle;
  handle.backend = LmBackend::synthetic_oracle;
  handle.impl = std::move(oracle);
  return handle;
}

std::string truncate_context(std::string_view context, size_t max_chars, Truncation side) {
  if (context.size() <= max_chars) return std::string(context);
  if (side == Truncation::keep_tail) return std::string(context.substr(context.size() - max_chars));
  return std::string(context.substr(0, max_chars));
}

std::vector<double> loglikelihood(const LanguageModelHandle& lm, std::string_view context,
                                  std::string_view continuation) {
  require(lm.impl != nullptr, ErrorKind::config, "loglikelihood: no backend configured");
  require(!continuation.empty(), ErrorKind::invalid_argument,
          "loglikelihood: continuation must be non-empty");
  const std::string ctx =
      truncate_context(context, static_cast<size_t>(lm.max_context_chars), lm.truncation);
  return lm.impl->loglikelihood(ctx, std::string(continuation));
}

std::string generate(const LanguageModelHandle& lm, std::string_view context, int max_tokens,
                     std::string_view stop) {
  require(lm.impl != nullptr, ErrorKind::config, "generate: no backend configured");
  if (max_tokens == 0) return "";
  const std::string ctx =
      truncate_context(context, static_cast<size_t>(lm.max_context_chars), lm.truncation);
  return lm.impl->generate(ctx, max_tokens, std::string(stop));
}

// --- UniformOracle ----------------------------------------------------------

UniformOracle::UniformOracle(size_t vocab_size) : vocab_size_(vocab_size) {
  require(vocab_size >= 1, ErrorKind::invalid_argument, "uniform oracle: vocab size must be >= 1");
}

std::vector<double> UniformOracle::loglikelihood(const std::string&,
                                                 const std::string& continuation) {
  const auto tokens = whitespace_tokens(continuation);
  const size_t n = tokens.empty() ? 1 : tokens.size();
  return std::vector<double>(n, -std::log(static_cast<double>(vocab_size_)));
}

std::string UniformOracle::generate(const std::string&, int, const std::string&) { return ""; }

std::string UniformOracle::backend_id() const {
  return "synthetic-oracle:uniform(v=" + std::to_string(vocab_size_) + ")";
}

// --- EchoOracle -------------------------------------------------------------

EchoOracle::EchoOracle(std::string payload) : payload_(std::move(payload)) {}

std::vector<double> EchoOracle::loglikelihood(const std::string&, const std::string& continuation) {
  const auto tokens = whitespace_tokens(continuation);
  const size_t n = tokens.empty() ? 1 : tokens.size();
  const double lp = (trim(continuation) == trim(payload_)) ? std::log(0.5) : kUnknownTokenLogProb;
  return std::vector<double>(n, lp);
}

std::string EchoOracle::generate(const std::string&, int max_tokens, const std::string& stop) {
  return truncate_tokens(apply_stop(payload_, stop), max_tokens);
}

std::string EchoOracle::backend_id() const {
  return "synthetic-oracle:echo(" + std::to_string(fnv1a64(payload_)) + ")";
}

// --- AttributeOracle --------------------------------------------------------

AttributeOracle::AttributeOracle(AttributeOracleParams params) : params_(params) {
  require(params_.attribute_count >= 2, ErrorKind::invalid_argument,
          "attribute oracle: attribute_count must be >= 2");
  require(params_.noise >= 0.0 && params_.noise < 1.0, ErrorKind::invalid_argument,
          "attribute oracle: noise must be in [0,1)");
}

std::string AttributeOracle::tag(int attribute) { return "@a" + std::to_string(attribute); }

std::string AttributeOracle::label_text(int attribute) {
  return "label" + std::to_string(attribute);
}

std::string AttributeOracle::target_text(int attribute) {
  return "found tag a" + std::to_string(attribute) + " here";
}

namespace {

struct TagScan {
  std::vector<int> example_attrs;  // in context order, query tag excluded
  int query_attr = -1;
  size_t query_pos = 0;  // byte offset of the query tag
};

TagScan scan_tags(const std::string& context, int attribute_count) {
  TagScan scan;
  std::vector<std::pair<size_t, int>> tags;
  size_t pos = 0;
  while ((pos = context.find("@a", pos)) != std::string::npos) {
    size_t digits = pos + 2;
    size_t end = digits;
    while (end < context.size() && std::isdigit(static_cast<unsigned char>(context[end]))) ++end;
    if (end > digits) {
      const int attr = std::stoi(context.substr(digits, end - digits));
      if (attr >= 0 && attr < attribute_count) tags.emplace_back(pos, attr);
    }
    pos = end > digits ? end : pos + 2;
  }
  if (tags.empty()) return scan;
  scan.query_attr = tags.back().second;
  scan.query_pos = tags.back().first;
  for (size_t i = 0; i + 1 < tags.size(); ++i) scan.example_attrs.push_back(tags[i].second);
  return scan;
}

}  // namespace

std::vector<double> AttributeOracle::label_probabilities(const std::string& context) const {
  const int a = params_.attribute_count;
  const TagScan scan = scan_tags(context, a);

  std::vector<double> counts(a, 0.0);
  // The example nearest the query gets position weight 1, the one before it
  // position_decay, and so on outward.
  const size_t n = scan.example_attrs.size();
  for (size_t i = 0; i < n; ++i) {
    const double weight = std::pow(params_.position_decay, static_cast<double>(n - 1 - i));
    counts[scan.example_attrs[i]] += weight;
  }

  std::vector<double> logits(a, 0.0);
  for (int j = 0; j < a; ++j) {
    logits[j] = params_.distract_gain * counts[j];
    if (j == scan.query_attr) logits[j] += params_.match_gain * counts[j];
    if (params_.noise > 0.0) {
      uint64_t h = fnv1a64_u64(params_.seed);
      if (scan.query_attr >= 0) h = fnv1a64(context.substr(scan.query_pos), h);
      h = fnv1a64_u64(static_cast<uint64_t>(j), h);
      const double eta = static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
      logits[j] -= params_.noise * eta;
    }
  }

  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  std::vector<double> probs(a, 0.0);
  for (int j = 0; j < a; ++j) {
    probs[j] = std::exp(logits[j] - max_logit);
    denom += probs[j];
  }
  for (int j = 0; j < a; ++j) probs[j] /= denom;
  return probs;
}

int AttributeOracle::answer_attribute(const std::string& context) const {
  const auto probs = label_probabilities(context);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> AttributeOracle::loglikelihood(const std::string& context,
                                                   const std::string& continuation) {
  const auto tokens = whitespace_tokens(continuation);
  const size_t n = tokens.empty() ? 1 : tokens.size();
  const std::string want = trim(continuation);
  for (int j = 0; j < params_.attribute_count; ++j) {
    const std::string text =
        params_.kind == TaskKind::NLU ? label_text(j) : target_text(j);
    if (want == text) {
      const double lp = std::log(label_probabilities(context)[j]);
      return std::vector<double>(n, lp / static_cast<double>(n));
    }
  }
  return std::vector<double>(n, kUnknownTokenLogProb);
}

std::string AttributeOracle::generate(const std::string& context, int max_tokens,
                                      const std::string& stop) {
  const int attr = answer_attribute(context);
  const std::string text =
      params_.kind == TaskKind::NLU ? label_text(attr) : target_text(attr);
  return truncate_tokens(apply_stop(text, stop), max_tokens);
}

std::string AttributeOracle::backend_id() const {
  std::ostringstream id;
  id << "synthetic-oracle:attribute(seed=" << params_.seed << ",a=" << params_.attribute_count
     << ",gain=" << params_.match_gain << ",distract=" << params_.distract_gain
     << ",noise=" << params_.noise << ",decay=" << params_.position_decay
     << ",kind=" << (params_.kind == TaskKind::NLU ? "nlu" : "nlg") << ")";
  return id.str();
}

}  // namespace seqsel
