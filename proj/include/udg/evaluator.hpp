#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "udg/annotator.hpp"
#include "udg/chat_client.hpp"
#include "udg/corpus.hpp"
#include "udg/decoder.hpp"
#include "udg/io.hpp"

namespace udg {

struct PositionalBleu {
  std::array<double, 3> by_position{};
  double average = 0.0;
};

// The i-th generated text against its best-matching reference. Throws
// std::invalid_argument unless there are exactly 3 generated texts and at
// least one reference.
PositionalBleu positional_bleu4(const std::vector<std::string>& generated, const std::vector<std::string>& references);

// Binary answer-correctness classifier; score is P(correct) * 100.
class FaithfulScorer {
 public:
  virtual ~FaithfulScorer() = default;
  virtual std::string kind() const = 0;
  virtual double score(std::string_view passage, std::string_view question, std::string_view candidate) const = 0;
  virtual io::Json manifest() const = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
};

struct ScorerTrainingOptions {
  int epochs = 20;
  double learning_rate = 0.2;
  double l2 = 1e-4;
  int hash_bits = 18;
  double max_class_ratio = 5.0;  // negatives per positive (or inverse) before warning
  uint64_t seed = 7;
};

// Logistic regression over hashed features of (passage, question, candidate):
// candidate tokens, the passage tokens around each place the candidate
// occurs, question-candidate and passage-candidate overlap, and a bias.
class HashedLogisticScorer final : public FaithfulScorer {
 public:
  HashedLogisticScorer(int hash_bits, std::vector<double> weights, io::Json manifest);

  std::string kind() const override { return "hashed_logistic"; }
  double score(std::string_view passage, std::string_view question, std::string_view candidate) const override;
  double probability(std::string_view passage, std::string_view question, std::string_view candidate) const;
  io::Json manifest() const override { return manifest_; }
  void save(const std::filesystem::path& dir) const override;

  static std::unique_ptr<HashedLogisticScorer> load(const std::filesystem::path& dir);

  // Sparse feature vector (index, value) for one input.
  std::vector<std::pair<uint32_t, double>> features(std::string_view passage, std::string_view question,
                                                    std::string_view candidate) const;

 private:
  int hash_bits_;
  std::vector<double> weights_;
  io::Json manifest_;
};

// Positives are the answers, negatives the reference distractors, of `items`
// whose ids are not in `exclude_ids`. Throws std::invalid_argument when no
// training pair is left.
std::unique_ptr<HashedLogisticScorer> train_faithful_scorer(const std::vector<RCItem>& items,
                                                            const ScorerTrainingOptions& options = {},
                                                            const std::vector<std::string>& exclude_ids = {});

std::unique_ptr<FaithfulScorer> load_faithful_scorer(const std::filesystem::path& dir);

double faithful_score(const FaithfulScorer& scorer, std::string_view passage, std::string_view question,
                      std::string_view candidate);

enum class JudgeAspect { kQuality, kDistracting };
enum class JudgeOutcome { kWin, kTie, kLose };

std::string_view to_string(JudgeAspect aspect);
JudgeAspect parse_judge_aspect(std::string_view name);
std::string_view to_string(JudgeOutcome outcome);

struct JudgeVerdict {
  JudgeAspect aspect = JudgeAspect::kDistracting;
  std::optional<JudgeOutcome> outcome;  // empty on parse failure; from cand_a's point of view
  bool order_was_swapped = false;
  std::string raw_response;
  int attempts = 0;
};

// Exactly "Win", "Lose" or "Tie", ignoring surrounding whitespace, quotes
// and a trailing full stop.
std::optional<JudgeOutcome> parse_verdict(std::string_view response);

// Whether cand_b is shown first for this (seed, item).
bool judge_order_swapped(uint64_t seed, std::string_view item_id);

// Compares cand_a with cand_b on one aspect. The reference shown to the judge
// is the item's first reference distractor. An unparseable reply is retried
// once; a second failure leaves outcome empty.
JudgeVerdict judge_pairwise(const RCItem& item, std::string_view cand_a, std::string_view cand_b, JudgeAspect aspect,
                            ChatClient& client, uint64_t seed, const TeacherConfig& judge_config = {});

struct JudgeTally {
  int win = 0;
  int tie = 0;
  int lose = 0;
  int parse_failures = 0;

  void add(const JudgeVerdict& verdict);
  int decided() const { return win + tie + lose; }
};

io::Json to_json(const JudgeVerdict& verdict);
io::Json to_json(const JudgeTally& tally);

// Optional extra similarity metric (e.g. embedding based); score in [0,100].
class SimilarityMetric {
 public:
  virtual ~SimilarityMetric() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view candidate, const std::vector<std::string>& references) const = 0;
};

struct MetricReport {
  std::array<double, 3> bleu4_by_position{};
  double bleu4_avg = 0.0;
  double rouge_l_avg = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
  std::optional<double> faithful_avg;
  std::map<std::string, double> extra;
  int n_items = 0;

  bool complete() const { return faithful_avg.has_value(); }
  // Every metric within [0, 100].
  bool in_range() const;
};

// Joins generations to items by id. Throws std::invalid_argument for an empty
// run, for generations without a matching item (listing their ids), for
// items without references and for records that do not hold 3 distractors.
MetricReport evaluate_run(const std::vector<GenerationResult>& generations, const std::vector<RCItem>& items,
                          const FaithfulScorer* scorer,
                          const std::vector<const SimilarityMetric*>& plugins = {});

io::Json to_json(const MetricReport& report);
MetricReport report_from_json(const io::Json& j);

// Columns: 1-st B4, 2-nd B4, 3-rd B4, Avg B4, Avg R-L, Distinct 1,
// Distinct 2, Avg FS, then any plug-in metrics.
std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace udg
