#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace udg {

using TokenId = int32_t;

// One decoding step's real-valued scores over the vocabulary.
using LogitVector = std::vector<double>;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kAnswerTask = 4;      // [ANS]
  static constexpr TokenId kDistractorTask = 5;  // [DIS]
  static constexpr TokenId kFirstWord = 6;

  // Special tokens only.
  Vocabulary();

  // Special tokens followed by every token of `texts` seen at least
  // `min_count` times, most frequent first (ties by token), capped at
  // `max_size` entries in total.
  static Vocabulary build(const std::vector<std::string>& texts, size_t max_size, int min_count = 1);

  static Vocabulary from_tokens(std::vector<std::string> tokens);

  size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  bool is_special(TokenId id) const { return id < kFirstWord; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::string_view text) const;
  // Drops special tokens and joins the rest with single spaces.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  explicit Vocabulary(int) {}

  std::vector<std::pair<std::string, TokenId>> sorted_;  // for lookup
};

enum class Task { kAnswer, kDistractor };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);
TokenId task_token(Task task);

// Conditioning fields of one example. `condition` is the pseudo distractor
// (answer task) or the answer (distractor task).
struct SourceFields {
  std::string passage;
  std::string question;
  std::string condition;

  bool operator==(const SourceFields&) const = default;
};

// "passage <sep> question <sep> condition".
std::string source_text(const SourceFields& source);

// Opaque per-source encoder state, reusable across decoding steps.
class EncodedSource {
 public:
  virtual ~EncodedSource() = default;
};

// Pluggable sequence-to-sequence student. The decoder prefix passed to
// next_token_logits starts with the task token ([ANS] or [DIS]) in place of a
// generic start token, followed by the tokens generated so far.
class StudentModel {
 public:
  virtual ~StudentModel() = default;

  virtual std::string kind() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  size_t vocab_size() const { return vocabulary().size(); }
  virtual size_t max_target_tokens() const = 0;

  virtual std::shared_ptr<const EncodedSource> encode(const SourceFields& source) const = 0;
  virtual LogitVector next_token_logits(const EncodedSource& source, std::span<const TokenId> decoder_prefix) const = 0;
  LogitVector next_token_logits(const SourceFields& source, std::span<const TokenId> decoder_prefix) const {
    return next_token_logits(*encode(source), decoder_prefix);
  }

  // Flat view of all trainable parameters.
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Teacher-forced cross entropy of `target` (which ends with kEos) given the
  // source and task token, summed over target positions. When `gradient` is
  // non-empty the gradient of that sum is added into it.
  virtual double accumulate_gradient(const SourceFields& source, TokenId task, std::span<const TokenId> target,
                                     std::span<double> gradient) const = 0;

  // Exact byte image of architecture, vocabulary and parameters.
  virtual std::string snapshot() const = 0;
  virtual void restore(std::string_view snapshot) = 0;
  virtual std::unique_ptr<StudentModel> clone() const = 0;

  // Whether encode/next_token_logits may run concurrently on one instance.
  virtual bool concurrent_inference_safe() const { return true; }
};

// Encodes target text for training: vocabulary ids (capped at
// `max_tokens`) followed by kEos.
std::vector<TokenId> encode_target(const Vocabulary& vocab, std::string_view target, size_t max_tokens);

}  // namespace udg
