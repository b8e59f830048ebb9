#include "udg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "udg/errors.hpp"
#include "udg/metrics.hpp"

namespace udg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("logit vectors differ in length: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  if (a.empty()) throw std::invalid_argument("empty logit vector");
}

}  // namespace

double scaling_factor(double x, double y, double t) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(t)) {
    throw std::invalid_argument("scaling_factor needs finite inputs");
  }
  if (!(t > 0.0)) throw std::invalid_argument("scaling_factor needs t > 0");
  if (x == 0.0) return 1.0;
  // sigmoid(z) - 0.5 == tanh(z / 2) / 2, which stays exactly 0 at z = 0.
  const double centred = 0.5 * std::tanh((x - y) / (2.0 * t));
  return std::exp(x > 0.0 ? centred : -centred);
}

std::string_view to_string(CcdMode mode) {
  switch (mode) {
    case CcdMode::kOff: return "off";
    case CcdMode::kRatio: return "ratio";
    case CcdMode::kScaled: return "scaled";
  }
  return "scaled";
}

CcdMode parse_ccd_mode(std::string_view name) {
  if (name == "off") return CcdMode::kOff;
  if (name == "ratio") return CcdMode::kRatio;
  if (name == "scaled") return CcdMode::kScaled;
  throw std::invalid_argument("unknown ccd mode: " + std::string(name));
}

std::string_view to_string(IntermediateMode mode) {
  return mode == IntermediateMode::kGreedy ? "greedy" : "beam_top1";
}

IntermediateMode parse_intermediate_mode(std::string_view name) {
  if (name == "greedy") return IntermediateMode::kGreedy;
  if (name == "beam_top1") return IntermediateMode::kBeamTop1;
  throw std::invalid_argument("unknown intermediate decoding mode: " + std::string(name));
}

void DecodeConfig::validate(size_t vocab_size) const {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("t must be a positive finite number");
  if (r < 1) throw ConfigError("r must be >= 1");
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (num_outputs < 1) throw ConfigError("num_outputs must be >= 1");
  if (num_outputs > beam_size) throw ConfigError("num_outputs must not exceed beam_size");
  if (!(jaccard_threshold >= 0.0 && jaccard_threshold <= 1.0)) throw ConfigError("jaccard_threshold must be in [0, 1]");
  if (max_length < 1) throw ConfigError("max_length must be >= 1");
  if (!std::isfinite(length_penalty)) throw ConfigError("length_penalty must be finite");
  if (vocab_size != 0 && static_cast<size_t>(r) >= vocab_size) {
    throw ConfigError("r must be smaller than the vocabulary size (" + std::to_string(vocab_size) + ")");
  }
}

io::Json to_json(const DecodeConfig& c) {
  return io::Json{{"t", c.t},
                  {"r", c.r},
                  {"beam_size", c.beam_size},
                  {"num_outputs", c.num_outputs},
                  {"jaccard_threshold", c.jaccard_threshold},
                  {"max_length", c.max_length},
                  {"length_penalty", c.length_penalty},
                  {"ccd_mode", to_string(c.ccd_mode)},
                  {"constraint", c.constraint},
                  {"intermediate", to_string(c.intermediate)},
                  {"normalisation", "joint_log_softmax"}};
}

DecodeConfig decode_config_from_json(const io::Json& j, DecodeConfig d) {
  d.t = j.value("t", d.t);
  d.r = j.value("r", d.r);
  d.beam_size = j.value("beam_size", d.beam_size);
  d.num_outputs = j.value("num_outputs", d.num_outputs);
  d.jaccard_threshold = j.value("jaccard_threshold", d.jaccard_threshold);
  d.max_length = j.value("max_length", d.max_length);
  d.length_penalty = j.value("length_penalty", d.length_penalty);
  if (j.contains("ccd_mode")) d.ccd_mode = parse_ccd_mode(j["ccd_mode"].get<std::string>());
  if (j.contains("constraint")) {
    const auto& c = j["constraint"];
    d.constraint = c.is_boolean() ? c.get<bool>() : c.get<std::string>() == "on";
  }
  if (j.contains("intermediate")) d.intermediate = parse_intermediate_mode(j["intermediate"].get<std::string>());
  return d;
}

std::string config_hash(const DecodeConfig& config) { return io::json_hash(to_json(config)); }

std::vector<int> rank_descending(std::span<const double> values) {
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] > values[b]; });
  std::vector<int> rank(values.size());
  for (size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<int>(k) + 1;
  return rank;
}

LogitVector log_softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  LogitVector out(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

LogitVector adjusted_logits(std::span<const double> logit_d, std::span<const double> logit_a, int r, double t) {
  check_lengths(logit_d, logit_a);
  if (r < 0) throw std::invalid_argument("r must be >= 0");
  const auto rank = rank_descending(logit_d);
  LogitVector out(logit_d.begin(), logit_d.end());
  for (size_t k = 0; k < out.size(); ++k) {
    if (rank[k] > r) out[k] = logit_d[k] * scaling_factor(logit_d[k], logit_a[k], t);
  }
  return out;
}

LogitVector adjust_logits(std::span<const double> logit_d, std::span<const double> logit_a, int r, double t) {
  return log_softmax(adjusted_logits(logit_d, logit_a, r, t));
}

LogitVector adjust_logits(std::span<const double> logit_d, std::span<const double> logit_a,
                          const DecodeConfig& config) {
  return adjust_logits(logit_d, logit_a, config.exempt_rank(), config.t);
}

LogitVector ccd_scores(std::span<const double> logit_d, std::span<const double> logit_a, const DecodeConfig& config) {
  check_lengths(logit_d, logit_a);
  switch (config.ccd_mode) {
    case CcdMode::kOff: return log_softmax(logit_d);
    case CcdMode::kScaled: return adjust_logits(logit_d, logit_a, config);
    case CcdMode::kRatio: {
      auto out = log_softmax(logit_d);
      const auto amateur = log_softmax(logit_a);
      const auto rank = rank_descending(logit_d);
      for (size_t k = 0; k < out.size(); ++k) {
        if (rank[k] > config.exempt_rank()) out[k] -= amateur[k];
      }
      return out;
    }
  }
  throw std::logic_error("unhandled ccd mode");
}

double length_normalised(double cumulative, size_t length, double length_penalty) {
  if (length_penalty == 1.0 || length == 0) return cumulative;
  return cumulative / std::pow(static_cast<double>(length), length_penalty - 1.0);
}

bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.final_score != b.final_score) return a.final_score > b.final_score;
  return a.token_ids < b.token_ids;
}

std::vector<BeamHypothesis> beam_search(const StepScorer& scorer, int beam_size, int max_length,
                                        double length_penalty, TokenId eos) {
  if (beam_size < 1 || max_length < 1) throw std::invalid_argument("beam_size and max_length must be >= 1");
  struct Candidate {
    size_t parent;
    TokenId token;
    double score;
  };
  std::vector<BeamHypothesis> live{BeamHypothesis{}};
  std::vector<BeamHypothesis> finished;
  for (int step = 0; step < max_length && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (size_t h = 0; h < live.size(); ++h) {
      const auto scores = scorer(live[h].token_ids);
      for (size_t v = 0; v < scores.size(); ++v) {
        if (scores[v] == kNegInf) continue;
        if (std::isnan(scores[v])) throw std::runtime_error("step scorer returned NaN");
        candidates.push_back({h, static_cast<TokenId>(v), live[h].cumulative_score + scores[v]});
      }
    }
    // Token ids of candidate c are live[c.parent].token_ids + c.token, so the
    // lexicographic tie-break compares parents first, then the new token.
    const auto before = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) {
        const auto& pa = live[a.parent].token_ids;
        const auto& pb = live[b.parent].token_ids;
        if (pa != pb) return pa < pb;
      }
      return a.token < b.token;
    };
    const size_t keep = std::min(candidates.size(), static_cast<size_t>(beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      before);
    std::vector<BeamHypothesis> next;
    for (size_t k = 0; k < keep; ++k) {
      const auto& c = candidates[k];
      BeamHypothesis hyp;
      hyp.token_ids = live[c.parent].token_ids;
      hyp.token_ids.push_back(c.token);
      hyp.cumulative_score = c.score;
      if (c.token == eos) {
        hyp.finished = true;
        hyp.final_score = length_normalised(hyp.cumulative_score, hyp.token_ids.size(), length_penalty);
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }
  for (auto& hyp : live) {
    hyp.final_score = length_normalised(hyp.cumulative_score, hyp.token_ids.size(), length_penalty);
    finished.push_back(std::move(hyp));
  }
  std::sort(finished.begin(), finished.end(), hypothesis_before);
  return finished;
}

DiverseSelection select_diverse(const std::vector<std::string>& texts, int num_outputs, double jaccard_threshold) {
  if (texts.empty()) throw std::invalid_argument("select_diverse needs at least one hypothesis");
  if (num_outputs < 1) throw std::invalid_argument("num_outputs must be >= 1");
  DiverseSelection out;
  std::vector<bool> taken(texts.size(), false);
  for (size_t k = 0; k < texts.size() && out.indices.size() < static_cast<size_t>(num_outputs); ++k) {
    const bool diverse = std::all_of(out.indices.begin(), out.indices.end(), [&](size_t j) {
      return metrics::jaccard_similarity(texts[k], texts[j]) <= jaccard_threshold;
    });
    if (!diverse) continue;
    out.indices.push_back(k);
    out.below_diversity.push_back(false);
    taken[k] = true;
  }
  for (size_t k = 0; k < texts.size() && out.indices.size() < static_cast<size_t>(num_outputs); ++k) {
    if (taken[k]) continue;
    out.indices.push_back(k);
    out.below_diversity.push_back(true);
    taken[k] = true;
  }
  return out;
}

void check_same_vocabulary(const StudentModel& a, const StudentModel& b) {
  if (a.vocabulary().tokens() != b.vocabulary().tokens()) {
    throw ConfigError("expert and amateur models do not share a vocabulary");
  }
}

bool generatable(TokenId id) { return id == Vocabulary::kEos || id >= Vocabulary::kFirstWord; }

namespace {

std::vector<TokenId> with_task(Task task, std::span<const TokenId> prefix) {
  std::vector<TokenId> out{task_token(task)};
  out.insert(out.end(), prefix.begin(), prefix.end());
  return out;
}

void mask_ungeneratable(LogitVector& scores) {
  for (size_t v = 0; v < scores.size(); ++v) {
    if (!generatable(static_cast<TokenId>(v))) scores[v] = kNegInf;
  }
}

std::string decode_hypothesis(const Vocabulary& vocab, const BeamHypothesis& hyp) {
  std::vector<TokenId> ids = hyp.token_ids;
  if (!ids.empty() && ids.back() == Vocabulary::kEos) ids.pop_back();
  return vocab.decode(ids);
}

}  // namespace

LogitVector ccd_step(const StudentModel& m_d, const StudentModel& m_a, const CcdSources& sources,
                     std::span<const TokenId> prefix, const DecodeConfig& config) {
  if (prefix.size() >= static_cast<size_t>(config.max_length)) {
    throw std::invalid_argument("decoder prefix already has max_length tokens");
  }
  const auto logit_d = m_d.next_token_logits(*sources.distractor, with_task(Task::kDistractor, prefix));
  if (config.ccd_mode == CcdMode::kOff) return log_softmax(logit_d);
  const auto logit_a = m_a.next_token_logits(*sources.answer, with_task(Task::kAnswer, prefix));
  return ccd_scores(logit_d, logit_a, config);
}

LogitVector ccd_step(const StudentModel& m_d, const StudentModel& m_a, const SourceFields& source_d,
                     const SourceFields& source_a, std::span<const TokenId> prefix, const DecodeConfig& config) {
  check_same_vocabulary(m_d, m_a);
  return ccd_step(m_d, m_a, CcdSources{m_d.encode(source_d), m_a.encode(source_a)}, prefix, config);
}

SourceFields distractor_source(const RCItem& item) { return SourceFields{item.passage, item.question, item.answer}; }

std::string generate_intermediate(const StudentModel& m_d, const RCItem& item, const DecodeConfig& config) {
  const auto encoded = m_d.encode(distractor_source(item));
  const int beam = config.intermediate == IntermediateMode::kGreedy ? 1 : config.beam_size;
  for (bool suppress_eos : {false, true}) {
    const StepScorer scorer = [&](std::span<const TokenId> prefix) {
      auto scores = log_softmax(m_d.next_token_logits(*encoded, with_task(Task::kDistractor, prefix)));
      mask_ungeneratable(scores);
      if (suppress_eos && prefix.empty()) scores[Vocabulary::kEos] = kNegInf;
      return scores;
    };
    const auto hyps = beam_search(scorer, beam, config.max_length, config.length_penalty, Vocabulary::kEos);
    if (hyps.empty()) continue;
    std::string text = decode_hypothesis(m_d.vocabulary(), hyps.front());
    if (!text.empty()) return text;
  }
  throw std::runtime_error("intermediate distractor for " + item.id + " is empty");
}

GenerationResult generate_distractors(const StudentModel& m_d, const StudentModel& m_a, const RCItem& item,
                                      const DecodeConfig& config) {
  check_same_vocabulary(m_d, m_a);
  config.validate(m_d.vocab_size());
  GenerationResult result;
  result.item_id = item.id;
  result.config_hash = config_hash(config);
  result.intermediate = generate_intermediate(m_d, item, config);

  const CcdSources sources{m_d.encode(distractor_source(item)),
                           m_a.encode(SourceFields{item.passage, item.question, result.intermediate})};
  const StepScorer scorer = [&](std::span<const TokenId> prefix) {
    auto scores = ccd_step(m_d, m_a, sources, prefix, config);
    mask_ungeneratable(scores);
    return scores;
  };
  const auto hyps = beam_search(scorer, config.beam_size, config.max_length, config.length_penalty, Vocabulary::kEos);

  std::vector<std::string> texts;
  std::vector<double> scores;
  for (const auto& hyp : hyps) {
    std::string text = decode_hypothesis(m_d.vocabulary(), hyp);
    if (text.empty()) continue;
    texts.push_back(std::move(text));
    scores.push_back(hyp.final_score);
  }
  if (texts.empty()) throw std::runtime_error("beam search produced no non-empty distractor for " + item.id);
  const auto selection = select_diverse(texts, config.num_outputs, config.jaccard_threshold);
  for (size_t k = 0; k < selection.indices.size(); ++k) {
    result.distractors.push_back(texts[selection.indices[k]]);
    result.scores.push_back(scores[selection.indices[k]]);
    result.below_diversity.push_back(selection.below_diversity[k]);
  }
  return result;
}

io::Json to_json(const GenerationResult& r) {
  return io::Json{{"item_id", r.item_id},         {"d_inter", r.intermediate},
                  {"distractors", r.distractors}, {"scores", r.scores},
                  {"below_diversity", r.below_diversity}, {"config_hash", r.config_hash}};
}

GenerationResult generation_from_json(const io::Json& j) {
  GenerationResult r;
  r.item_id = j.at("item_id").get<std::string>();
  r.intermediate = j.value("d_inter", std::string{});
  r.distractors = j.at("distractors").get<std::vector<std::string>>();
  r.scores = j.value("scores", std::vector<double>{});
  r.below_diversity = j.value("below_diversity", std::vector<bool>(r.distractors.size(), false));
  r.config_hash = j.value("config_hash", std::string{});
  return r;
}

void write_generations(const std::filesystem::path& path, const std::vector<GenerationResult>& results) {
  std::vector<io::Json> records;
  for (const auto& r : results) records.push_back(to_json(r));
  io::write_jsonl(path, records);
}

std::vector<GenerationResult> read_generations(const std::filesystem::path& path) {
  std::vector<GenerationResult> out;
  for (const auto& j : io::read_jsonl(path)) out.push_back(generation_from_json(j));
  return out;
}

}  // namespace udg
