#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seqsel {

// Rouge-L F1 over token lists: F = 2PR/(P+R) with P = LCS/|candidate|,
// R = LCS/|reference|. Zero when either side is empty or the LCS is empty.
double rouge_l_f1(const std::vector<std::string>& reference,
                  const std::vector<std::string>& candidate);

// Convenience form over raw text, whitespace-tokenized.
double rouge_l_f1(std::string_view reference, std::string_view candidate);

// Length of the longest common subsequence (linear-memory DP).
size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace seqsel
