#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "udg/corpus.hpp"
#include "udg/io.hpp"
#include "udg/model.hpp"

namespace udg {

// exp(sgn(x) * (sigmoid((x - y) / t) - 0.5)). Throws std::invalid_argument on
// non-finite input or t <= 0.
double scaling_factor(double x, double y, double t);

enum class CcdMode { kOff, kRatio, kScaled };
enum class IntermediateMode { kGreedy, kBeamTop1 };

std::string_view to_string(CcdMode mode);
CcdMode parse_ccd_mode(std::string_view name);
std::string_view to_string(IntermediateMode mode);
IntermediateMode parse_intermediate_mode(std::string_view name);

struct DecodeConfig {
  double t = 2.0;
  int r = 15;
  int beam_size = 20;
  int num_outputs = 3;
  double jaccard_threshold = 0.5;
  int max_length = 24;
  double length_penalty = 1.0;
  CcdMode ccd_mode = CcdMode::kScaled;
  bool constraint = true;
  IntermediateMode intermediate = IntermediateMode::kGreedy;

  // Throws ConfigError. When vocab_size is non-zero also checks r < vocab_size.
  void validate(size_t vocab_size = 0) const;
  // Number of top-ranked tokens exempt from adjustment (0 without constraint).
  int exempt_rank() const { return constraint ? r : 0; }
};

io::Json to_json(const DecodeConfig& config);
DecodeConfig decode_config_from_json(const io::Json& j, DecodeConfig defaults = {});
std::string config_hash(const DecodeConfig& config);

// 1-based ranks by value descending, ties by ascending index.
std::vector<int> rank_descending(std::span<const double> values);

// Combined pre-softmax vector: raw logit_d for the `r` top-ranked tokens,
// logit_d * f(logit_d, logit_a, t) for the rest.
LogitVector adjusted_logits(std::span<const double> logit_d, std::span<const double> logit_a, int r, double t);

// log_softmax(adjusted_logits(...)).
LogitVector adjust_logits(std::span<const double> logit_d, std::span<const double> logit_a, int r, double t);
LogitVector adjust_logits(std::span<const double> logit_d, std::span<const double> logit_a, const DecodeConfig& config);

LogitVector log_softmax(std::span<const double> logits);

// Per-token scores under config.ccd_mode:
//   off    -> log_softmax(logit_d)
//   ratio  -> log p_d - log p_a for tokens ranked below r, log p_d above
//   scaled -> adjust_logits
LogitVector ccd_scores(std::span<const double> logit_d, std::span<const double> logit_a, const DecodeConfig& config);

struct BeamHypothesis {
  std::vector<TokenId> token_ids;  // generated tokens, ending with eos when finished
  double cumulative_score = 0.0;   // sum of per-step scores
  double final_score = 0.0;        // cumulative_score / len^(length_penalty - 1)
  bool finished = false;

  bool operator==(const BeamHypothesis&) const = default;
};

// Returns a score per vocabulary entry for the next token after `prefix`.
// Entries equal to -inf are never expanded.
using StepScorer = std::function<LogitVector(std::span<const TokenId> prefix)>;

double length_normalised(double cumulative, size_t length, double length_penalty);

// Orders by final score descending, then token ids lexicographically.
bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b);

// Each step ranks every expansion of the live hypotheses by (score, token
// ids) and keeps the best beam_size; expansions ending in `eos` are retired
// as finished, the rest stay live. Hypotheses still live after max_length
// steps are returned unfinished. Result is sorted by hypothesis_before.
std::vector<BeamHypothesis> beam_search(const StepScorer& scorer, int beam_size, int max_length,
                                        double length_penalty, TokenId eos);

struct DiverseSelection {
  std::vector<size_t> indices;          // into the input hypotheses
  std::vector<bool> below_diversity;    // filled without meeting the threshold
};

// Greedy Jaccard selection over texts already sorted best-first. Throws
// std::invalid_argument when `texts` is empty.
DiverseSelection select_diverse(const std::vector<std::string>& texts, int num_outputs, double jaccard_threshold);

// Encoded (p, q, a) for M_d and (p, q, d_inter) for M_a.
struct CcdSources {
  std::shared_ptr<const EncodedSource> distractor;
  std::shared_ptr<const EncodedSource> answer;
};

// Scores for the token after the shared generated `prefix`. M_d sees [DIS]
// then prefix; M_a sees [ANS] then prefix.
LogitVector ccd_step(const StudentModel& m_d, const StudentModel& m_a, const CcdSources& sources,
                     std::span<const TokenId> prefix, const DecodeConfig& config);
LogitVector ccd_step(const StudentModel& m_d, const StudentModel& m_a, const SourceFields& source_d,
                     const SourceFields& source_a, std::span<const TokenId> prefix, const DecodeConfig& config);

// Throws ConfigError when the two models do not share one vocabulary.
void check_same_vocabulary(const StudentModel& a, const StudentModel& b);

// Tokens a generator may emit: words and eos.
bool generatable(TokenId id);

SourceFields distractor_source(const RCItem& item);

// Plain decoding of M_d on (p, q, a). Throws std::runtime_error when even the
// eos-suppressed retry yields nothing.
std::string generate_intermediate(const StudentModel& m_d, const RCItem& item, const DecodeConfig& config);

struct GenerationResult {
  std::string item_id;
  std::string intermediate;
  std::vector<std::string> distractors;
  std::vector<double> scores;
  std::vector<bool> below_diversity;
  std::string config_hash;
};

GenerationResult generate_distractors(const StudentModel& m_d, const StudentModel& m_a, const RCItem& item,
                                      const DecodeConfig& config);

io::Json to_json(const GenerationResult& result);
GenerationResult generation_from_json(const io::Json& j);
void write_generations(const std::filesystem::path& path, const std::vector<GenerationResult>& results);
std::vector<GenerationResult> read_generations(const std::filesystem::path& path);

}  // namespace udg
