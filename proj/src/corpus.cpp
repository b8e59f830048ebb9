#include "udg/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "udg/errors.hpp"
#include "udg/text.hpp"

namespace fs = std::filesystem;

namespace udg {

using io::Json;

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + std::string(name));
}

std::string_view to_string(DatasetKind kind) { return kind == DatasetKind::kRace ? "race" : "dream"; }

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "race") return DatasetKind::kRace;
  if (name == "dream") return DatasetKind::kDream;
  throw std::invalid_argument("unknown dataset kind: " + std::string(name));
}

namespace {

Split split_from_path(const fs::path& relative) {
  for (const auto& part : relative) {
    std::string name = text::lowercase(part.stem().string());
    if (name == "test" || name == "dev" || name == "val" || name == "validation") return Split::kTest;
  }
  return Split::kTrain;
}

std::vector<fs::path> list_files(const fs::path& root, std::string_view extension) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
    return files;
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (!extension.empty() && entry.path().extension() != extension) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Json parse_json_file(const fs::path& path) {
  try {
    return Json::parse(io::read_file(path));
  } catch (const Json::parse_error& e) {
    throw IngestError(path.string() + ": malformed JSON: " + e.what());
  }
}

std::string require_string(const Json& value, const std::string& where) {
  if (!value.is_string()) throw IngestError(where + ": expected a string");
  return value.get<std::string>();
}

struct RawQuestion {
  std::string locator;
  std::string passage;
  std::string question;
  std::vector<std::string> options;
  int answer_index = -1;  // -1 when no option is marked correct
  Split split = Split::kTrain;
};

// Shared tail of both readers: normalisation, answer/distractor mapping and
// drop accounting.
void emit(const RawQuestion& raw, IngestResult& out) {
  auto drop = [&](std::string reason) {
    spdlog::warn("ingest: dropping {}: {}", raw.locator, reason);
    out.dropped.push_back({raw.locator, std::move(reason)});
  };
  if (raw.answer_index < 0 || raw.answer_index >= static_cast<int>(raw.options.size())) {
    drop("no option marked correct");
    return;
  }
  RCItem item;
  item.id = raw.locator;
  item.passage = raw.passage;
  item.question = text::normalize(raw.question);
  item.answer = text::normalize(raw.options[static_cast<size_t>(raw.answer_index)]);
  item.split = raw.split;
  if (item.passage.empty() || item.question.empty() || item.answer.empty()) {
    drop("empty passage, question or answer after normalization");
    return;
  }
  for (size_t i = 0; i < raw.options.size(); ++i) {
    if (static_cast<int>(i) == raw.answer_index) continue;
    std::string option = text::normalize(raw.options[i]);
    if (option == item.answer) {
      spdlog::warn("ingest: {}: distractor duplicates the answer, dropped", raw.locator);
      continue;
    }
    if (!option.empty()) item.reference_distractors.push_back(std::move(option));
  }
  out.items.push_back(std::move(item));
}

std::string relative_name(const fs::path& file, const fs::path& root) {
  if (fs::is_regular_file(root)) return file.filename().generic_string();
  return fs::relative(file, root).generic_string();
}

void ingest_race_file(const fs::path& file, const fs::path& root, IngestResult& out) {
  const Json doc = parse_json_file(file);
  const std::string rel = relative_name(file, root);
  if (!doc.is_object()) throw IngestError(file.string() + ": expected a JSON object");
  for (const char* key : {"article", "questions", "options", "answers"}) {
    if (!doc.contains(key)) throw IngestError(file.string() + ": missing field '" + key + "'");
  }
  const std::string passage = text::normalize(require_string(doc["article"], file.string() + ": article"));
  const Json& questions = doc["questions"];
  const Json& options = doc["options"];
  const Json& answers = doc["answers"];
  if (!questions.is_array() || !options.is_array() || !answers.is_array() ||
      options.size() != questions.size()) {
    throw IngestError(file.string() + ": questions/options/answers arrays are inconsistent");
  }
  const Split split = split_from_path(fs::path(rel));
  for (size_t q = 0; q < questions.size(); ++q) {
    const std::string where = file.string() + " record " + std::to_string(q);
    RawQuestion raw;
    raw.locator = rel + "#" + std::to_string(q);
    raw.passage = passage;
    raw.question = require_string(questions[q], where + ": question");
    if (!options[q].is_array()) throw IngestError(where + ": options must be an array");
    for (const auto& opt : options[q]) raw.options.push_back(require_string(opt, where + ": option"));
    raw.split = split;
    if (q < answers.size() && answers[q].is_string()) {
      const std::string letter = text::trim(answers[q].get<std::string>());
      if (letter.size() == 1 && letter[0] >= 'A' && letter[0] <= 'Z') {
        raw.answer_index = letter[0] - 'A';
      }
    }
    emit(raw, out);
  }
}

void ingest_dream_file(const fs::path& file, const fs::path& root, IngestResult& out) {
  const Json doc = parse_json_file(file);
  if (!doc.is_array()) throw IngestError(file.string() + ": expected a top-level JSON array");
  const std::string rel = relative_name(file, root);
  const Split split = split_from_path(fs::path(rel));
  for (size_t d = 0; d < doc.size(); ++d) {
    const Json& dialogue = doc[d];
    const std::string where = file.string() + " record " + std::to_string(d);
    if (!dialogue.is_array() || dialogue.size() < 2 || !dialogue[0].is_array() || !dialogue[1].is_array()) {
      throw IngestError(where + ": expected [turns, questions, id]");
    }
    std::vector<std::string> turns;
    for (const auto& turn : dialogue[0]) {
      std::string line = text::normalize(require_string(turn, where + ": turn"));
      if (!line.empty()) turns.push_back(std::move(line));
    }
    const std::string passage = text::join(turns, "\n");
    const std::string dialogue_id =
        dialogue.size() > 2 && dialogue[2].is_string() ? dialogue[2].get<std::string>() : std::to_string(d);
    for (size_t q = 0; q < dialogue[1].size(); ++q) {
      const Json& question = dialogue[1][q];
      const std::string qwhere = where + " question " + std::to_string(q);
      if (!question.is_object() || !question.contains("question") || !question.contains("choice") ||
          !question["choice"].is_array()) {
        throw IngestError(qwhere + ": expected {question, choice, answer}");
      }
      RawQuestion raw;
      raw.locator = rel + "/" + dialogue_id + "#" + std::to_string(q);
      raw.passage = passage;
      raw.question = require_string(question["question"], qwhere + ": question");
      for (const auto& choice : question["choice"]) raw.options.push_back(require_string(choice, qwhere + ": choice"));
      raw.split = split;
      if (question.contains("answer") && question["answer"].is_string()) {
        const std::string answer = text::normalize(question["answer"].get<std::string>());
        for (size_t i = 0; i < raw.options.size(); ++i) {
          if (text::normalize(raw.options[i]) == answer) {
            raw.answer_index = static_cast<int>(i);
            break;
          }
        }
      }
      emit(raw, out);
    }
  }
}

}  // namespace

IngestResult ingest(const fs::path& raw_dataset_path, DatasetKind kind) {
  if (!fs::exists(raw_dataset_path)) {
    throw std::invalid_argument("dataset path does not exist: " + raw_dataset_path.string());
  }
  IngestResult out;
  if (kind == DatasetKind::kRace) {
    for (const auto& file : list_files(raw_dataset_path, "")) {
      if (file.filename().string().starts_with(".")) continue;
      ingest_race_file(file, raw_dataset_path, out);
    }
  } else {
    for (const auto& file : list_files(raw_dataset_path, ".json")) {
      ingest_dream_file(file, raw_dataset_path, out);
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& item : out.items) {
    if (!seen.insert(item.id).second) throw IngestError("duplicate item id: " + item.id);
  }
  return out;
}

DatasetStats stats(const std::vector<RCItem>& items) { return stats(items, {}); }

DatasetStats stats(const std::vector<RCItem>& items, const std::vector<std::string>& labelled_ids) {
  DatasetStats s;
  s.qa_pair_count = static_cast<int64_t>(items.size());
  std::unordered_set<std::string_view> passages;
  std::unordered_set<std::string_view> ids;
  for (const auto& item : items) {
    passages.insert(item.passage);
    ids.insert(item.id);
  }
  s.passage_count = static_cast<int64_t>(passages.size());
  std::unordered_set<std::string_view> labelled;
  for (const auto& id : labelled_ids) {
    if (ids.contains(id)) labelled.insert(id);
  }
  s.pseudo_label_count = static_cast<int64_t>(labelled.size());
  return s;
}

std::vector<RCItem> sample_ratio(const std::vector<RCItem>& items, double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("data ratio must be in (0, 1], got " + std::to_string(ratio));
  }
  if (ratio == 1.0) return items;
  const auto count = static_cast<size_t>(std::llround(ratio * static_cast<double>(items.size())));
  std::vector<size_t> order(items.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<RCItem> out;
  out.reserve(count);
  for (size_t i : order) out.push_back(items[i]);
  return out;
}

std::vector<RCItem> filter_split(const std::vector<RCItem>& items, Split split) {
  std::vector<RCItem> out;
  for (const auto& item : items) {
    if (item.split == split) out.push_back(item);
  }
  return out;
}

Json to_json(const RCItem& item) {
  return Json{{"id", item.id},
              {"passage", item.passage},
              {"question", item.question},
              {"answer", item.answer},
              {"distractors", item.reference_distractors},
              {"split", to_string(item.split)}};
}

RCItem item_from_json(const Json& record) {
  RCItem item;
  item.id = record.at("id").get<std::string>();
  item.passage = record.at("passage").get<std::string>();
  item.question = record.at("question").get<std::string>();
  item.answer = record.at("answer").get<std::string>();
  item.reference_distractors = record.value("distractors", std::vector<std::string>{});
  item.split = parse_split(record.value("split", std::string("train")));
  return item;
}

void write_items(const fs::path& path, const std::vector<RCItem>& items) {
  std::vector<Json> records;
  records.reserve(items.size());
  for (const auto& item : items) records.push_back(to_json(item));
  io::write_jsonl(path, records);
}

std::vector<RCItem> read_items(const fs::path& path) {
  std::vector<RCItem> items;
  for (const auto& record : io::read_jsonl(path)) items.push_back(item_from_json(record));
  return items;
}

}  // namespace udg
