#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "udg/io.hpp"

namespace udg {

enum class Split { kTrain, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

// One multiple-choice reading-comprehension question. Reference distractors
// are evaluation-only; nothing that builds training data reads them.
struct RCItem {
  std::string id;
  std::string passage;
  std::string question;
  std::string answer;
  std::vector<std::string> reference_distractors;
  Split split = Split::kTrain;

  bool operator==(const RCItem&) const = default;
};

struct DatasetStats {
  int64_t qa_pair_count = 0;
  int64_t passage_count = 0;
  int64_t pseudo_label_count = 0;

  bool operator==(const DatasetStats&) const = default;
};

enum class DatasetKind { kRace, kDream };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

struct DroppedRecord {
  std::string source;  // file path plus record locator
  std::string reason;
};

struct IngestResult {
  std::vector<RCItem> items;
  std::vector<DroppedRecord> dropped;
};

// Reads a native RACE directory tree (one JSON object per file) or a Dream
// file/directory (JSON arrays of [turns, questions, id]). Files are visited
// in sorted path order so repeated ingestion is identical. The split comes
// from the path: a component named test, dev or val maps to test, anything
// else to train.
IngestResult ingest(const std::filesystem::path& raw_dataset_path, DatasetKind kind);

DatasetStats stats(const std::vector<RCItem>& items);

// Same, with pseudo_label_count taken from the number of labelled item ids
// that resolve to an item in `items`.
DatasetStats stats(const std::vector<RCItem>& items, const std::vector<std::string>& labelled_ids);

// Uniform sample without replacement of round(ratio * n) items. The result
// keeps the input order.
std::vector<RCItem> sample_ratio(const std::vector<RCItem>& items, double ratio, uint64_t seed);

std::vector<RCItem> filter_split(const std::vector<RCItem>& items, Split split);

// Canonical line-delimited interchange format:
// {id, passage, question, answer, distractors, split}.
io::Json to_json(const RCItem& item);
RCItem item_from_json(const io::Json& record);

void write_items(const std::filesystem::path& path, const std::vector<RCItem>& items);
std::vector<RCItem> read_items(const std::filesystem::path& path);

}  // namespace udg
