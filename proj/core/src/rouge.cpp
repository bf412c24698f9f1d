#include "seqsel/rouge.hpp"

#include <algorithm>

#include "seqsel/featurize.hpp"

namespace seqsel {

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1]) curr[j] = prev[j - 1] + 1;
      else curr[j] = std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

double rouge_l_f1(const std::vector<std::string>& reference,
                  const std::vector<std::string>& candidate) {
  if (reference.empty() || candidate.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(reference, candidate));
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(candidate.size());
  const double recall = lcs / static_cast<double>(reference.size());
  return 2.0 * precision * recall / (precision + recall);
}

double rouge_l_f1(std::string_view reference, std::string_view candidate) {
  return rouge_l_f1(whitespace_tokens(reference), whitespace_tokens(candidate));
}

}  // namespace seqsel
