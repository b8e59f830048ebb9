#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace udg::metrics {

// Sentence-level BLEU-4 on a 0-100 scale. Both texts go through
// text::tokenize (case-sensitive). Precisions of orders 2..4 use add-one
// smoothing on both the match count and the n-gram total; the unigram
// precision is unsmoothed, so a candidate with no token in common with the
// reference scores exactly 0. Standard brevity penalty. The same function
// backs the pseudo-label filter and every evaluation BLEU.
//
// Throws std::invalid_argument when either text has no tokens.
double bleu4(std::string_view candidate, std::string_view reference);

// Token-level BLEU-4 on already tokenized input.
double bleu4_tokens(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

// ROUGE-L F1 (longest common subsequence) on a 0-100 scale, max over
// references. Empty candidate or empty reference scores 0 against it.
double rouge_l(std::string_view candidate, const std::vector<std::string>& references);

// Distinct n-grams over total n-grams across all outputs, 0-100. Returns 0
// when there are no n-grams at all.
double distinct_n(const std::vector<std::string>& outputs, int n);

// Jaccard similarity of lowercased token sets. Two empty sets are identical.
double jaccard_similarity(std::string_view a, std::string_view b);

}  // namespace udg::metrics
