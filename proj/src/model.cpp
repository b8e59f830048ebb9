#include "udg/model.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "udg/text.hpp"

namespace udg {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials{"<pad>", "<unk>", "</s>", "<sep>", "[ANS]", "[DIS]"};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(from_tokens({})) {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    std::vector<std::string> with_specials = specials;
    for (auto& t : tokens) {
      if (std::find(specials.begin(), specials.end(), t) == specials.end()) with_specials.push_back(std::move(t));
    }
    tokens = std::move(with_specials);
  }
  Vocabulary v(0);
  v.tokens_ = std::move(tokens);
  v.sorted_.reserve(v.tokens_.size());
  for (size_t i = 0; i < v.tokens_.size(); ++i) v.sorted_.emplace_back(v.tokens_[i], static_cast<TokenId>(i));
  std::sort(v.sorted_.begin(), v.sorted_.end());
  for (size_t i = 1; i < v.sorted_.size(); ++i) {
    if (v.sorted_[i].first == v.sorted_[i - 1].first) {
      throw std::invalid_argument("duplicate vocabulary token: " + v.sorted_[i].first);
    }
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, size_t max_size, int min_count) {
  std::map<std::string, int> counts;
  for (const auto& t : texts) {
    for (auto& token : text::tokenize(t)) ++counts[token];
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = special_tokens();
  for (auto& [token, count] : ranked) {
    if (tokens.size() >= max_size) break;
    if (count < min_count) continue;
    if (std::find(tokens.begin(), tokens.begin() + kFirstWord, token) != tokens.begin() + kFirstWord) continue;
    tokens.push_back(token);
  }
  return from_tokens(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), token,
                             [](const auto& entry, std::string_view t) { return entry.first < t; });
  if (it != sorted_.end() && it->first == token) return it->second;
  return kUnk;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& token : text::tokenize(text)) ids.push_back(id(token));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (is_special(id) && id != kUnk) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

std::string_view to_string(Task task) { return task == Task::kAnswer ? "ANS" : "DIS"; }

Task parse_task(std::string_view name) {
  if (name == "ANS") return Task::kAnswer;
  if (name == "DIS") return Task::kDistractor;
  throw std::invalid_argument("unknown task: " + std::string(name));
}

TokenId task_token(Task task) {
  return task == Task::kAnswer ? Vocabulary::kAnswerTask : Vocabulary::kDistractorTask;
}

std::string source_text(const SourceFields& source) {
  return source.passage + " <sep> " + source.question + " <sep> " + source.condition;
}

std::vector<TokenId> encode_target(const Vocabulary& vocab, std::string_view target, size_t max_tokens) {
  auto ids = vocab.encode(target);
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace udg
