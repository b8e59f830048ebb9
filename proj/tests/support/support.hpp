#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "udg/annotator.hpp"
#include "udg/corpus.hpp"
#include "udg/decoder.hpp"
#include "udg/io.hpp"
#include "udg/model.hpp"
#include "udg/tiny_seq2seq.hpp"
#include "udg/trainer.hpp"

namespace udg::test {

std::filesystem::path data_dir();
io::Json load_json(const std::string& name);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

// The 50 train and 12 test items of tests/data/toy_race.
std::vector<RCItem> toy_items();

// Stub-teacher labels for the toy train items, run through the filter.
std::vector<PseudoLabel> toy_kept_labels(const std::vector<RCItem>& train_items);

// Vocabulary over the toy items and their labels.
Vocabulary toy_vocabulary(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& labels);

// Student whose logits come from a function of (source, decoder prefix).
class TableModel final : public StudentModel {
 public:
  using LogitFn = std::function<LogitVector(const SourceFields&, std::span<const TokenId>)>;

  TableModel(Vocabulary vocab, LogitFn fn) : vocab_(std::move(vocab)), fn_(std::move(fn)) {}

  std::string kind() const override { return "table"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  size_t max_target_tokens() const override { return 16; }
  std::shared_ptr<const EncodedSource> encode(const SourceFields& source) const override;
  LogitVector next_token_logits(const EncodedSource& source, std::span<const TokenId> prefix) const override;
  using StudentModel::next_token_logits;
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }
  double accumulate_gradient(const SourceFields&, TokenId, std::span<const TokenId>, std::span<double>) const override;
  std::string snapshot() const override { return "table"; }
  void restore(std::string_view) override {}
  std::unique_ptr<StudentModel> clone() const override { return std::make_unique<TableModel>(vocab_, fn_); }

 private:
  Vocabulary vocab_;
  LogitFn fn_;
};

// Vocabulary of the 6 special tokens plus `words`.
Vocabulary small_vocabulary(const std::vector<std::string>& words);

// Deterministic pseudo-random logits keyed on (salt, source, prefix).
TableModel::LogitFn hashed_logits(uint64_t salt, size_t vocab_size, double scale = 3.0);

// Synthetic answer-verification corpus: the answer is the passage word that
// follows the marker "key"; distractors are other passage words.
std::vector<RCItem> separable_corpus(size_t n, uint64_t seed, const std::string& id_prefix);

}  // namespace udg::test
