#include "support.hpp"

#include <random>
#include <stdexcept>
#include <unistd.h>

#include "udg/chat_client.hpp"
#include "udg/prompt.hpp"
#include "udg/text.hpp"

namespace udg::test {

namespace fs = std::filesystem;

fs::path data_dir() { return UDG_TEST_DATA_DIR; }

io::Json load_json(const std::string& name) { return io::Json::parse(io::read_file(data_dir() / name)); }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("udg_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<RCItem> toy_items() { return ingest(data_dir() / "toy_race", DatasetKind::kRace).items; }

std::vector<PseudoLabel> toy_kept_labels(const std::vector<RCItem>& train_items) {
  StubChatClient client(heuristic_teacher_response);
  TeacherConfig config;
  config.concurrency_limit = 1;
  const auto labels = generate_pseudo_labels(train_items, config, builtin_template("pseudo_gpt"), client);
  return filter_pseudo_labels(labels, index_items(train_items)).kept;
}

Vocabulary toy_vocabulary(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& labels) {
  std::vector<std::string> texts;
  for (const auto& item : items) {
    texts.push_back(item.passage);
    texts.push_back(item.question);
    texts.push_back(item.answer);
  }
  for (const auto& l : labels) texts.push_back(l.distractor_text);
  return Vocabulary::build(texts, 5000);
}

namespace {

struct TableSource final : EncodedSource {
  SourceFields fields;
};

}  // namespace

std::shared_ptr<const EncodedSource> TableModel::encode(const SourceFields& source) const {
  auto out = std::make_shared<TableSource>();
  out->fields = source;
  return out;
}

LogitVector TableModel::next_token_logits(const EncodedSource& source, std::span<const TokenId> prefix) const {
  auto logits = fn_(dynamic_cast<const TableSource&>(source).fields, prefix);
  if (logits.size() != vocab_.size()) throw std::logic_error("table model returned wrong logit count");
  return logits;
}

double TableModel::accumulate_gradient(const SourceFields&, TokenId, std::span<const TokenId>,
                                       std::span<double>) const {
  throw std::logic_error("table model is not trainable");
}

Vocabulary small_vocabulary(const std::vector<std::string>& words) {
  std::vector<std::string> tokens{"<pad>", "<unk>", "</s>", "<sep>", "[ANS]", "[DIS]"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary::from_tokens(tokens);
}

TableModel::LogitFn hashed_logits(uint64_t salt, size_t vocab_size, double scale) {
  return [salt, vocab_size, scale](const SourceFields& source, std::span<const TokenId> prefix) {
    std::string key = std::to_string(salt) + "|" + source_text(source) + "|";
    for (TokenId t : prefix) key += std::to_string(t) + ",";
    std::mt19937_64 rng(text::fnv1a(key));
    std::uniform_real_distribution<double> u(-scale, scale);
    LogitVector logits(vocab_size);
    for (double& v : logits) v = u(rng);
    return logits;
  };
}

std::vector<RCItem> separable_corpus(size_t n, uint64_t seed, const std::string& id_prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, 799);
  std::vector<RCItem> items;
  for (size_t k = 0; k < n; ++k) {
    std::vector<std::string> words;
    for (int i = 0; i < 14; ++i) words.push_back("w" + std::to_string(word(rng)));
    const size_t marked = 1 + static_cast<size_t>(rng() % 12);
    words.insert(words.begin() + static_cast<long>(marked), "key");
    RCItem item;
    item.id = id_prefix + std::to_string(k);
    item.passage = text::join(words);
    item.question = "Which word comes after the marker?";
    item.answer = words[marked + 1];
    for (size_t step : {3, 6, 9}) {
      const size_t j = (marked + step) % words.size();
      if (words[j] != item.answer && words[j] != "key") item.reference_distractors.push_back(words[j]);
    }
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace udg::test
