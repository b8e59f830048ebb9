#include "udg/evaluator.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "udg/errors.hpp"
#include "udg/metrics.hpp"
#include "udg/prompt.hpp"
#include "udg/text.hpp"

namespace udg {

PositionalBleu positional_bleu4(const std::vector<std::string>& generated, const std::vector<std::string>& references) {
  if (generated.size() != 3) {
    throw std::invalid_argument("positional BLEU needs exactly 3 generated texts, got " +
                                std::to_string(generated.size()));
  }
  if (references.empty()) throw std::invalid_argument("positional BLEU needs at least one reference");
  PositionalBleu out;
  for (size_t i = 0; i < 3; ++i) {
    double best = 0.0;
    if (!text::trim(generated[i]).empty()) {
      for (const auto& ref : references) best = std::max(best, metrics::bleu4(generated[i], ref));
    }
    out.by_position[i] = best;
  }
  out.average = (out.by_position[0] + out.by_position[1] + out.by_position[2]) / 3.0;
  return out;
}

namespace {

std::vector<std::string> lower_tokens(std::string_view s) { return text::tokenize(text::lowercase(s)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double overlap_fraction(const std::vector<std::string>& candidate, const std::set<std::string>& context) {
  if (candidate.empty()) return 0.0;
  size_t hit = 0;
  for (const auto& token : candidate) hit += context.count(token);
  return static_cast<double>(hit) / static_cast<double>(candidate.size());
}

}  // namespace

HashedLogisticScorer::HashedLogisticScorer(int hash_bits, std::vector<double> weights, io::Json manifest)
    : hash_bits_(hash_bits), weights_(std::move(weights)), manifest_(std::move(manifest)) {
  if (hash_bits_ < 4 || hash_bits_ > 26) throw std::invalid_argument("hash_bits must be in [4, 26]");
  if (weights_.size() != (size_t{1} << hash_bits_)) throw std::invalid_argument("weight vector size mismatch");
}

std::vector<std::pair<uint32_t, double>> HashedLogisticScorer::features(std::string_view passage,
                                                                         std::string_view question,
                                                                         std::string_view candidate) const {
  const uint64_t mask = (uint64_t{1} << hash_bits_) - 1;
  std::map<uint32_t, double> acc;
  const auto add = [&](const std::string& name, double value) {
    acc[static_cast<uint32_t>(text::fnv1a(name) & mask)] += value;
  };
  const auto p = lower_tokens(passage);
  const auto q = lower_tokens(question);
  const auto c = lower_tokens(candidate);
  add("bias", 1.0);
  for (const auto& token : std::set<std::string>(c.begin(), c.end())) add("c=" + token, 1.0);
  if (!c.empty() && c.size() <= p.size()) {
    int found = 0;
    for (size_t i = 0; i + c.size() <= p.size(); ++i) {
      if (!std::equal(c.begin(), c.end(), p.begin() + static_cast<std::ptrdiff_t>(i))) continue;
      ++found;
      add("prev=" + (i == 0 ? std::string("<s>") : p[i - 1]), 1.0);
      add("next=" + (i + c.size() == p.size() ? std::string("</s>") : p[i + c.size()]), 1.0);
    }
    add(found > 0 ? "span_found" : "span_missing", 1.0);
  }
  add("passage_overlap", overlap_fraction(c, std::set<std::string>(p.begin(), p.end())));
  add("question_overlap", overlap_fraction(c, std::set<std::string>(q.begin(), q.end())));
  return {acc.begin(), acc.end()};
}

double HashedLogisticScorer::probability(std::string_view passage, std::string_view question,
                                         std::string_view candidate) const {
  double z = 0.0;
  for (const auto& [index, value] : features(passage, question, candidate)) z += weights_[index] * value;
  return sigmoid(z);
}

double HashedLogisticScorer::score(std::string_view passage, std::string_view question,
                                   std::string_view candidate) const {
  return std::clamp(100.0 * probability(passage, question, candidate), 0.0, 100.0);
}

void HashedLogisticScorer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::Json sparse = io::Json::array();
  for (size_t k = 0; k < weights_.size(); ++k) {
    if (weights_[k] != 0.0) sparse.push_back({k, weights_[k]});
  }
  const io::Json model{{"kind", kind()}, {"hash_bits", hash_bits_}, {"weights", sparse}};
  const std::string bytes = model.dump();
  io::write_file(dir / "scorer.json", bytes);
  io::Json manifest = manifest_;
  manifest["kind"] = kind();
  manifest["scorer_sha256"] = io::sha256_hex(bytes);
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::unique_ptr<HashedLogisticScorer> HashedLogisticScorer::load(const std::filesystem::path& dir) {
  const auto model = io::Json::parse(io::read_file(dir / "scorer.json"));
  if (model.value("kind", "") != "hashed_logistic") throw ConfigError("unsupported scorer in " + dir.string());
  const int bits = model.at("hash_bits").get<int>();
  std::vector<double> weights(size_t{1} << bits, 0.0);
  for (const auto& entry : model.at("weights")) weights.at(entry[0].get<size_t>()) = entry[1].get<double>();
  io::Json manifest = io::Json::object();
  if (std::filesystem::exists(dir / "manifest.json")) manifest = io::Json::parse(io::read_file(dir / "manifest.json"));
  manifest.erase("scorer_sha256");
  manifest.erase("kind");
  return std::make_unique<HashedLogisticScorer>(bits, std::move(weights), std::move(manifest));
}

std::unique_ptr<HashedLogisticScorer> train_faithful_scorer(const std::vector<RCItem>& items,
                                                            const ScorerTrainingOptions& options,
                                                            const std::vector<std::string>& exclude_ids) {
  const std::set<std::string> excluded(exclude_ids.begin(), exclude_ids.end());
  struct Example {
    const RCItem* item;
    std::string candidate;
    double label;
  };
  std::vector<Example> data;
  io::Json hashed = io::Json::array();
  size_t positives = 0;
  size_t negatives = 0;
  for (const auto& item : items) {
    if (excluded.count(item.id)) continue;
    data.push_back({&item, item.answer, 1.0});
    ++positives;
    for (const auto& d : item.reference_distractors) {
      data.push_back({&item, d, 0.0});
      ++negatives;
    }
    hashed.push_back({item.id, item.answer, item.reference_distractors});
  }
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("faithful scorer training needs both answers and reference distractors");
  }
  const double ratio = static_cast<double>(std::max(positives, negatives)) /
                       static_cast<double>(std::min(positives, negatives));
  if (ratio > options.max_class_ratio) {
    spdlog::warn("faithful scorer classes are imbalanced: {} positives vs {} negatives", positives, negatives);
  }

  io::Json manifest{{"data_hash", io::json_hash(hashed)},
                    {"seed", options.seed},
                    {"epochs", options.epochs},
                    {"learning_rate", options.learning_rate},
                    {"hash_bits", options.hash_bits},
                    {"l2", options.l2},
                    {"positives", positives},
                    {"negatives", negatives},
                    {"calibration", "raw probability x 100"}};
  auto scorer = std::make_unique<HashedLogisticScorer>(options.hash_bits,
                                                       std::vector<double>(size_t{1} << options.hash_bits, 0.0),
                                                       manifest);
  std::vector<std::vector<std::pair<uint32_t, double>>> feats;
  feats.reserve(data.size());
  for (const auto& ex : data) feats.push_back(scorer->features(ex.item->passage, ex.item->question, ex.candidate));

  std::vector<double> weights(size_t{1} << options.hash_bits, 0.0);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(options.seed);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = options.learning_rate / (1.0 + 0.1 * epoch);
    for (size_t k : order) {
      double z = 0.0;
      for (const auto& [index, value] : feats[k]) z += weights[index] * value;
      const double err = sigmoid(z) - data[k].label;
      for (const auto& [index, value] : feats[k]) {
        weights[index] -= lr * (err * value + options.l2 * weights[index]);
      }
    }
  }
  return std::make_unique<HashedLogisticScorer>(options.hash_bits, std::move(weights), std::move(manifest));
}

std::unique_ptr<FaithfulScorer> load_faithful_scorer(const std::filesystem::path& dir) {
  return HashedLogisticScorer::load(dir);
}

double faithful_score(const FaithfulScorer& scorer, std::string_view passage, std::string_view question,
                      std::string_view candidate) {
  return scorer.score(passage, question, candidate);
}

std::string_view to_string(JudgeAspect aspect) {
  return aspect == JudgeAspect::kQuality ? "quality" : "distracting";
}

JudgeAspect parse_judge_aspect(std::string_view name) {
  if (name == "quality") return JudgeAspect::kQuality;
  if (name == "distracting") return JudgeAspect::kDistracting;
  throw std::invalid_argument("unknown judge aspect: " + std::string(name));
}

std::string_view to_string(JudgeOutcome outcome) {
  switch (outcome) {
    case JudgeOutcome::kWin: return "Win";
    case JudgeOutcome::kTie: return "Tie";
    case JudgeOutcome::kLose: return "Lose";
  }
  return "Tie";
}

std::optional<JudgeOutcome> parse_verdict(std::string_view response) {
  std::string s = text::trim(response);
  const auto strip = [&](char c) {
    if (!s.empty() && s.back() == c) s.pop_back();
  };
  strip('.');
  for (char quote : {'\'', '"'}) {
    if (s.size() >= 2 && s.front() == quote && s.back() == quote) s = s.substr(1, s.size() - 2);
  }
  strip('.');
  if (s == "Win") return JudgeOutcome::kWin;
  if (s == "Lose") return JudgeOutcome::kLose;
  if (s == "Tie") return JudgeOutcome::kTie;
  return std::nullopt;
}

bool judge_order_swapped(uint64_t seed, std::string_view item_id) {
  const uint64_t h = text::fnv1a(item_id);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(h),
                    static_cast<uint32_t>(h >> 32)};
  std::mt19937_64 rng(seq);
  return std::bernoulli_distribution(0.5)(rng);
}

JudgeVerdict judge_pairwise(const RCItem& item, std::string_view cand_a, std::string_view cand_b, JudgeAspect aspect,
                            ChatClient& client, uint64_t seed, const TeacherConfig& judge_config) {
  if (item.reference_distractors.empty()) {
    throw std::invalid_argument("judging needs a reference distractor for " + item.id);
  }
  JudgeVerdict verdict;
  verdict.aspect = aspect;
  verdict.order_was_swapped = judge_order_swapped(seed, item.id);
  const std::string_view first = verdict.order_was_swapped ? cand_b : cand_a;
  const std::string_view second = verdict.order_was_swapped ? cand_a : cand_b;
  const auto& requirement = builtin_template(aspect == JudgeAspect::kQuality ? "judge_requirement_quality"
                                                                              : "judge_requirement_distracting");
  const auto prompt = render(builtin_template("judge"), {{"passage", item.passage},
                                                         {"question", item.question},
                                                         {"answer", item.answer},
                                                         {"reference", item.reference_distractors.front()},
                                                         {"requirement", requirement.user_text},
                                                         {"candidate_1", std::string(first)},
                                                         {"candidate_2", std::string(second)}});
  const ChatRequest request{judge_config.model_name, prompt.system, prompt.user, judge_config.temperature,
                            judge_config.sampling_enabled};
  for (int attempt = 0; attempt < 2 && !verdict.outcome; ++attempt) {
    verdict.raw_response = client.complete(request);
    ++verdict.attempts;
    verdict.outcome = parse_verdict(verdict.raw_response);
  }
  if (verdict.outcome && verdict.order_was_swapped && *verdict.outcome != JudgeOutcome::kTie) {
    verdict.outcome = *verdict.outcome == JudgeOutcome::kWin ? JudgeOutcome::kLose : JudgeOutcome::kWin;
  }
  return verdict;
}

void JudgeTally::add(const JudgeVerdict& verdict) {
  if (!verdict.outcome) {
    ++parse_failures;
    return;
  }
  switch (*verdict.outcome) {
    case JudgeOutcome::kWin: ++win; break;
    case JudgeOutcome::kTie: ++tie; break;
    case JudgeOutcome::kLose: ++lose; break;
  }
}

io::Json to_json(const JudgeVerdict& v) {
  return io::Json{{"aspect", to_string(v.aspect)},
                  {"outcome", v.outcome ? io::Json(to_string(*v.outcome)) : io::Json(nullptr)},
                  {"order_was_swapped", v.order_was_swapped},
                  {"raw_response", v.raw_response},
                  {"attempts", v.attempts}};
}

io::Json to_json(const JudgeTally& t) {
  const auto rate = [&](int n) { return t.decided() == 0 ? 0.0 : 100.0 * n / t.decided(); };
  return io::Json{{"win", t.win},   {"tie", t.tie},   {"lose", t.lose},          {"parse_failures", t.parse_failures},
                  {"win_rate", rate(t.win)}, {"tie_rate", rate(t.tie)}, {"lose_rate", rate(t.lose)}};
}

bool MetricReport::in_range() const {
  const auto ok = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; };
  bool good = ok(bleu4_avg) && ok(rouge_l_avg) && ok(distinct1) && ok(distinct2);
  for (double v : bleu4_by_position) good = good && ok(v);
  if (faithful_avg) good = good && ok(*faithful_avg);
  for (const auto& [name, v] : extra) good = good && ok(v);
  return good;
}

MetricReport evaluate_run(const std::vector<GenerationResult>& generations, const std::vector<RCItem>& items,
                          const FaithfulScorer* scorer, const std::vector<const SimilarityMetric*>& plugins) {
  if (generations.empty()) throw std::invalid_argument("cannot evaluate an empty run");
  std::map<std::string, const RCItem*> index;
  for (const auto& item : items) index.emplace(item.id, &item);
  std::vector<std::string> missing;
  for (const auto& g : generations) {
    if (!index.count(g.item_id)) missing.push_back(g.item_id);
  }
  if (!missing.empty()) throw std::invalid_argument("generations without a matching item: " + text::join(missing, ", "));

  MetricReport report;
  report.n_items = static_cast<int>(generations.size());
  std::vector<std::string> pooled;
  double rouge = 0.0;
  double faithful = 0.0;
  std::map<std::string, double> extra;
  for (const auto& g : generations) {
    const RCItem& item = *index.at(g.item_id);
    if (item.reference_distractors.empty()) throw std::invalid_argument("item " + item.id + " has no references");
    const auto bleu = positional_bleu4(g.distractors, item.reference_distractors);
    for (size_t i = 0; i < 3; ++i) report.bleu4_by_position[i] += bleu.by_position[i];
    for (const auto& d : g.distractors) {
      pooled.push_back(d);
      rouge += text::trim(d).empty() ? 0.0 : metrics::rouge_l(d, item.reference_distractors);
      if (scorer) faithful += scorer->score(item.passage, item.question, d);
      for (const auto* plugin : plugins) extra[plugin->name()] += plugin->score(d, item.reference_distractors);
    }
  }
  const double n = static_cast<double>(generations.size());
  const double outputs = static_cast<double>(pooled.size());
  for (double& v : report.bleu4_by_position) v /= n;
  report.bleu4_avg = (report.bleu4_by_position[0] + report.bleu4_by_position[1] + report.bleu4_by_position[2]) / 3.0;
  report.rouge_l_avg = rouge / outputs;
  report.distinct1 = metrics::distinct_n(pooled, 1);
  report.distinct2 = metrics::distinct_n(pooled, 2);
  if (scorer) report.faithful_avg = faithful / outputs;
  for (auto& [name, total] : extra) report.extra[name] = total / outputs;
  return report;
}

io::Json to_json(const MetricReport& r) {
  io::Json j{{"bleu4_by_position", r.bleu4_by_position},
             {"bleu4_avg", r.bleu4_avg},
             {"rouge_l_avg", r.rouge_l_avg},
             {"distinct1", r.distinct1},
             {"distinct2", r.distinct2},
             {"faithful_avg", r.faithful_avg ? io::Json(*r.faithful_avg) : io::Json(nullptr)},
             {"n_items", r.n_items}};
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

MetricReport report_from_json(const io::Json& j) {
  MetricReport r;
  r.bleu4_by_position = j.at("bleu4_by_position").get<std::array<double, 3>>();
  r.bleu4_avg = j.at("bleu4_avg").get<double>();
  r.rouge_l_avg = j.at("rouge_l_avg").get<double>();
  r.distinct1 = j.at("distinct1").get<double>();
  r.distinct2 = j.at("distinct2").get<double>();
  if (j.contains("faithful_avg") && !j["faithful_avg"].is_null()) r.faithful_avg = j["faithful_avg"].get<double>();
  if (j.contains("extra")) r.extra = j["extra"].get<std::map<std::string, double>>();
  r.n_items = j.at("n_items").get<int>();
  return r;
}

std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::vector<std::string> header{"Models", "1-st B4", "2-nd B4",    "3-rd B4",    "Avg B4",
                                  "Avg R-L", "Distinct 1", "Distinct 2", "Avg FS"};
  std::set<std::string> plugin_names;
  for (const auto& [name, r] : rows) {
    for (const auto& [metric, v] : r.extra) plugin_names.insert(metric);
  }
  header.insert(header.end(), plugin_names.begin(), plugin_names.end());

  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows) {
    std::vector<std::string> row{name};
    for (double v : r.bleu4_by_position) row.push_back(fmt::format("{:.2f}", v));
    for (double v : {r.bleu4_avg, r.rouge_l_avg, r.distinct1, r.distinct2}) row.push_back(fmt::format("{:.2f}", v));
    row.push_back(r.faithful_avg ? fmt::format("{:.2f}", *r.faithful_avg) : "-");
    for (const auto& metric : plugin_names) {
      auto it = r.extra.find(metric);
      row.push_back(it == r.extra.end() ? "-" : fmt::format("{:.2f}", it->second));
    }
    cells.push_back(std::move(row));
  }
  std::vector<size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (size_t r = 0; r < cells.size(); ++r) {
    for (size_t c = 0; c < cells[r].size(); ++c) {
      out += c == 0 ? fmt::format("{:<{}}", cells[r][c], width[c]) : fmt::format(" | {:>{}}", cells[r][c], width[c]);
    }
    out += "\n";
    if (r == 0) {
      for (size_t c = 0; c < width.size(); ++c) out += (c == 0 ? "" : "-|-") + std::string(width[c], '-');
      out += "\n";
    }
  }
  return out;
}

}  // namespace udg
