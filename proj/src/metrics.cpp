#include "udg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "udg/text.hpp"

namespace udg::metrics {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> count_ngrams(const std::vector<std::string>& tokens, size_t n) {
  std::map<Ngram, int> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) {
    throw std::invalid_argument("BLEU-4 needs non-empty candidate and reference");
  }
  constexpr size_t kMaxOrder = 4;
  double log_precision_sum = 0.0;
  for (size_t n = 1; n <= kMaxOrder; ++n) {
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    double matches = 0.0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matches += std::min(count, it->second);
    }
    double total = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
    if (n == 1) {
      if (matches == 0.0) return 0.0;
    } else {
      matches += 1.0;
      total += 1.0;
    }
    log_precision_sum += std::log(matches / total);
  }
  const auto c = static_cast<double>(candidate.size());
  const auto r = static_cast<double>(reference.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * brevity * std::exp(log_precision_sum / static_cast<double>(kMaxOrder));
}

double bleu4(std::string_view candidate, std::string_view reference) {
  return bleu4_tokens(text::tokenize(candidate), text::tokenize(reference));
}

double rouge_l(std::string_view candidate, const std::vector<std::string>& references) {
  const auto cand = text::tokenize(candidate);
  double best = 0.0;
  for (const auto& reference : references) {
    const auto ref = text::tokenize(reference);
    if (cand.empty() || ref.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0.0) continue;
    const double precision = lcs / static_cast<double>(cand.size());
    const double recall = lcs / static_cast<double>(ref.size());
    best = std::max(best, 100.0 * 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

double distinct_n(const std::vector<std::string>& outputs, int n) {
  if (n < 1) throw std::invalid_argument("distinct-n needs n >= 1");
  std::set<Ngram> distinct;
  size_t total = 0;
  for (const auto& output : outputs) {
    const auto tokens = text::tokenize(output);
    if (tokens.size() < static_cast<size_t>(n)) continue;
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
      distinct.emplace(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i) + n);
      ++total;
    }
  }
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  const auto ta = text::tokenize(text::lowercase(a));
  const auto tb = text::tokenize(text::lowercase(b));
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  size_t shared = 0;
  for (const auto& token : sa) shared += sb.count(token);
  return static_cast<double>(shared) / static_cast<double>(sa.size() + sb.size() - shared);
}

}  // namespace udg::metrics
