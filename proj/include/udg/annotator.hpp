#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udg/chat_client.hpp"
#include "udg/corpus.hpp"
#include "udg/io.hpp"
#include "udg/prompt.hpp"

namespace udg {

struct TeacherConfig {
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.0;
  bool sampling_enabled = false;
  int max_retries = 3;
  std::chrono::seconds request_timeout{60};
  int concurrency_limit = 4;
  std::chrono::milliseconds retry_backoff{1000};  // doubled after each failed attempt

  void validate() const;
};

enum class LabelStatus { kOk, kFailed };

// One teacher-generated distractor (d') for one training item.
struct PseudoLabel {
  std::string item_id;
  std::string distractor_text;
  std::string raw_response;
  LabelStatus status = LabelStatus::kOk;
  std::optional<double> bleu4_vs_answer;  // set by filter_pseudo_labels
  bool kept = false;

  bool operator==(const PseudoLabel&) const = default;
};

// Journal schema {item_id, raw_response, distractor_text, status}, plus
// bleu4_vs_answer and kept once the label has been through the filter.
io::Json to_json(const PseudoLabel& label);
PseudoLabel label_from_json(const io::Json& record);
void write_labels(const std::filesystem::path& path, const std::vector<PseudoLabel>& labels);
std::vector<PseudoLabel> read_labels(const std::filesystem::path& path);

struct AnnotationOptions {
  // Append-only response journal. Items that already have a record are not
  // requested again, which makes an interrupted run resumable.
  std::optional<std::filesystem::path> journal;
  // Also re-request items whose journalled record is a failure.
  bool retry_failed = false;
  // Few-shot blocks prepended to every prompt.
  std::vector<std::string> demonstrations;
};

// One label per item, in item order. Transport and parse failures are retried
// up to max_retries times and then recorded as failed labels. An AuthError
// stops all workers and is rethrown after everything already answered has
// been journalled.
std::vector<PseudoLabel> generate_pseudo_labels(const std::vector<RCItem>& items, const TeacherConfig& config,
                                                const PromptTemplate& tmpl, ChatClient& client,
                                                const AnnotationOptions& options = {});

struct FilterResult {
  std::vector<PseudoLabel> kept;
  std::vector<PseudoLabel> dropped;
};

constexpr double kDefaultFilterThreshold = 30.0;

// Scores each label's distractor against its item's answer with BLEU-4 and
// keeps it iff the score is at most `threshold` and the text is non-empty.
// Throws std::invalid_argument when a label's item is not in `items`.
FilterResult filter_pseudo_labels(const std::vector<PseudoLabel>& labels,
                                  const std::map<std::string, RCItem>& items,
                                  double threshold = kDefaultFilterThreshold);

std::map<std::string, RCItem> index_items(const std::vector<RCItem>& items);

struct ZeroShotResult {
  std::vector<std::string> distractors;
  bool complete = false;  // false when fewer than three could be parsed
  std::string raw_response;
  int attempts = 0;
};

// LLM baseline: asks for three distractors in one request. A response with
// fewer than three results is retried; the best partial answer is returned
// flagged incomplete once retries run out.
ZeroShotResult zero_shot_generate(const RCItem& item, const TeacherConfig& config, const PromptTemplate& tmpl,
                                  ChatClient& client);

}  // namespace udg
