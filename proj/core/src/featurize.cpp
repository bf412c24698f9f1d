#include "seqsel/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "seqsel/hash.hpp"

namespace seqsel {

void validate(const FeatConfig& config) {
  require(config.dim >= 2, ErrorKind::invalid_argument, "featurize: dim must be >= 2");
  require((config.dim & (config.dim - 1)) == 0, ErrorKind::invalid_argument,
          "featurize: dim must be a power of two");
  require(config.word_unigrams || config.word_bigrams || config.char_trigrams,
          ErrorKind::invalid_argument, "featurize: at least one n-gram family must be enabled");
}

bool operator==(const FeatConfig& a, const FeatConfig& b) {
  return a.dim == b.dim && a.word_unigrams == b.word_unigrams &&
         a.word_bigrams == b.word_bigrams && a.char_trigrams == b.char_trigrams &&
         a.hash_seed == b.hash_seed;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

namespace {

// Low bit selects the sign, remaining bits the bucket. The family tag byte
// keeps unigram/bigram/trigram hash domains apart.
inline void accumulate(std::map<uint32_t, double>& buckets, uint64_t h, uint32_t mask) {
  const uint32_t index = static_cast<uint32_t>(h >> 1) & mask;
  const double sign = (h & 1u) ? 1.0 : -1.0;
  buckets[index] += sign;
}

}  // namespace

SparseVec featurize(std::string_view text, const FeatConfig& config) {
  validate(config);
  SparseVec out;
  if (text.empty()) return out;

  const uint32_t mask = config.dim - 1;
  const uint64_t base = fnv1a64_u64(config.hash_seed);
  std::map<uint32_t, double> buckets;

  if (config.word_unigrams || config.word_bigrams) {
    const auto tokens = whitespace_tokens(text);
    if (config.word_unigrams) {
      for (const auto& tok : tokens) accumulate(buckets, fnv1a64(tok, fnv1a64("u", base)), mask);
    }
    if (config.word_bigrams) {
      for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        uint64_t h = fnv1a64("b", base);
        h = fnv1a64(tokens[i], h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(tokens[i + 1], h);
        accumulate(buckets, h, mask);
      }
    }
  }
  if (config.char_trigrams) {
    for (size_t i = 0; i + 3 <= text.size(); ++i)
      accumulate(buckets, fnv1a64(text.substr(i, 3), fnv1a64("c", base)), mask);
  }

  double norm_sq = 0.0;
  for (const auto& [index, value] : buckets) {
    if (value == 0.0) continue;  // signed collisions can cancel exactly
    norm_sq += value * value;
  }
  if (norm_sq == 0.0) return out;
  const double inv_norm = 1.0 / std::sqrt(norm_sq);
  out.idx.reserve(buckets.size());
  out.val.reserve(buckets.size());
  for (const auto& [index, value] : buckets) {
    if (value == 0.0) continue;
    out.idx.push_back(index);
    out.val.push_back(value * inv_norm);
  }
  return out;
}

double dot(const SparseVec& a, const SparseVec& b) {
  double acc = 0.0;
  size_t i = 0, j = 0;
  while (i < a.idx.size() && j < b.idx.size()) {
    if (a.idx[i] < b.idx[j]) ++i;
    else if (a.idx[i] > b.idx[j]) ++j;
    else acc += a.val[i++] * b.val[j++];
  }
  return acc;
}

double l2_norm(const SparseVec& v) {
  double acc = 0.0;
  for (double x : v.val) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace seqsel
