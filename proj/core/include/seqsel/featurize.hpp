#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "seqsel/errors.hpp"

namespace seqsel {

// Hashed n-gram featurization config. The hashed feature space stands in
// for a pretrained text encoder: word unigrams + bigrams plus character
// trigrams, signed hashing into `dim` buckets, L2 normalization.
struct FeatConfig {
  uint32_t dim = 1u << 18;  // power of two
  bool word_unigrams = true;
  bool word_bigrams = true;
  bool char_trigrams = true;
  uint64_t hash_seed = 0;
};

void validate(const FeatConfig& config);
bool operator==(const FeatConfig& a, const FeatConfig& b);

// Sparse vector with strictly increasing indices.
struct SparseVec {
  std::vector<uint32_t> idx;
  std::vector<double> val;

  size_t nnz() const { return idx.size(); }
};

// Deterministic featurization. Equal (text, config) give bitwise-equal
// vectors across processes. Empty text maps to the zero vector; any other
// text is L2-normalized.
SparseVec featurize(std::string_view text, const FeatConfig& config);

double dot(const SparseVec& a, const SparseVec& b);
double l2_norm(const SparseVec& v);

std::vector<std::string> whitespace_tokens(std::string_view text);

}  // namespace seqsel
