#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "udg/model.hpp"

namespace udg {

struct TinyModelConfig {
  int embedding_dim = 32;
  int hidden_dim = 64;
  size_t max_source_tokens = 256;
  size_t max_target_tokens = 24;
  uint64_t seed = 13;

  bool operator==(const TinyModelConfig&) const = default;
};

// Desk-scale encoder-decoder used when no pretrained student is available.
//
// Encoder: every source position j gets h_j = tanh(W_enc [e(x_{j-1}); e(x_j);
// e(x_{j+1})] + b_enc). Decoder step i: s_i = tanh(W_dec [e(y_{i-1});
// e(y_{i-2}); e(task)] + b_dec), dot-product attention of s_i over h gives a
// context c_i, o_i = tanh(W_out_hidden [s_i; c_i] + b), logits = W_vocab o_i +
// b_vocab. Token embeddings are shared between encoder and decoder. There is
// no recurrence, so a single step costs one attention pass.
//
// Source truncation only shortens the passage (from its tail); question and
// conditioning text are always kept whole.
class TinySeq2Seq final : public StudentModel {
 public:
  TinySeq2Seq(Vocabulary vocab, TinyModelConfig config);

  static std::unique_ptr<TinySeq2Seq> from_snapshot(std::string_view snapshot);

  std::string kind() const override { return "tiny_seq2seq"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  size_t max_target_tokens() const override { return config_.max_target_tokens; }
  const TinyModelConfig& config() const { return config_; }

  std::vector<TokenId> encode_source_ids(const SourceFields& source) const;

  std::shared_ptr<const EncodedSource> encode(const SourceFields& source) const override;
  LogitVector next_token_logits(const EncodedSource& source, std::span<const TokenId> decoder_prefix) const override;
  using StudentModel::next_token_logits;

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  double accumulate_gradient(const SourceFields& source, TokenId task, std::span<const TokenId> target,
                             std::span<double> gradient) const override;

  std::string snapshot() const override;
  void restore(std::string_view snapshot) override;
  std::unique_ptr<StudentModel> clone() const override;

 private:
  struct Layout;
  friend struct Layout;

  void initialise();

  Vocabulary vocab_;
  TinyModelConfig config_;
  std::vector<double> params_;
};

// Loads any snapshot written by a shipped StudentModel implementation.
std::unique_ptr<StudentModel> load_student(std::string_view snapshot);

}  // namespace udg
