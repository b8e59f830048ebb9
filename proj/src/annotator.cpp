#include "udg/annotator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "udg/errors.hpp"
#include "udg/metrics.hpp"

namespace udg {

void TeacherConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("teacher temperature must be >= 0");
  if (concurrency_limit < 1) throw ConfigError("teacher concurrency_limit must be >= 1");
  if (max_retries < 0) throw ConfigError("teacher max_retries must be >= 0");
}

io::Json to_json(const PseudoLabel& label) {
  io::Json j{{"item_id", label.item_id},
             {"raw_response", label.raw_response},
             {"distractor_text", label.distractor_text},
             {"status", label.status == LabelStatus::kOk ? "ok" : "failed"}};
  if (label.bleu4_vs_answer) {
    j["bleu4_vs_answer"] = *label.bleu4_vs_answer;
    j["kept"] = label.kept;
  }
  return j;
}

PseudoLabel label_from_json(const io::Json& record) {
  PseudoLabel label;
  label.item_id = record.at("item_id").get<std::string>();
  label.raw_response = record.value("raw_response", std::string());
  label.distractor_text = record.value("distractor_text", std::string());
  label.status = record.value("status", std::string("ok")) == "ok" ? LabelStatus::kOk : LabelStatus::kFailed;
  if (record.contains("bleu4_vs_answer") && record["bleu4_vs_answer"].is_number()) {
    label.bleu4_vs_answer = record["bleu4_vs_answer"].get<double>();
  }
  label.kept = record.value("kept", false);
  return label;
}

void write_labels(const std::filesystem::path& path, const std::vector<PseudoLabel>& labels) {
  std::vector<io::Json> records;
  records.reserve(labels.size());
  for (const auto& label : labels) records.push_back(to_json(label));
  io::write_jsonl(path, records);
}

std::vector<PseudoLabel> read_labels(const std::filesystem::path& path) {
  std::vector<PseudoLabel> labels;
  for (const auto& record : io::read_jsonl(path)) labels.push_back(label_from_json(record));
  return labels;
}

namespace {

ChatRequest make_request(const TeacherConfig& config, const RenderedPrompt& prompt) {
  return ChatRequest{config.model_name, prompt.system, prompt.user, config.temperature, config.sampling_enabled};
}

// Prompts that end with an opening tag prime the model to answer with the
// payload and closing tag only.
std::string with_primed_tag(const PromptTemplate& tmpl, const std::string& response) {
  const std::string open = "<result>";
  if (!tmpl.user_text.ends_with(open)) return response;
  const size_t first_open = response.find(open);
  const size_t first_close = response.find("</result>");
  if (first_close != std::string::npos && (first_open == std::string::npos || first_open > first_close)) {
    return open + response;
  }
  return response;
}

void backoff(const TeacherConfig& config, int attempt) {
  if (config.retry_backoff.count() <= 0) return;
  std::this_thread::sleep_for(config.retry_backoff * (1 << std::min(attempt, 6)));
}

PseudoLabel annotate_one(const RCItem& item, const TeacherConfig& config, const PromptTemplate& tmpl,
                         ChatClient& client, const std::vector<std::string>& demonstrations) {
  const ChatRequest request = make_request(config, render_prompt(item, tmpl, demonstrations));
  PseudoLabel label;
  label.item_id = item.id;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    try {
      label.raw_response = client.complete(request);
      auto results = parse_result_tags(with_primed_tag(tmpl, label.raw_response), 1);
      label.distractor_text = results.front();
      label.status = LabelStatus::kOk;
      return label;
    } catch (const TransportError& e) {
      spdlog::warn("annotate {}: attempt {} transport failure: {}", item.id, attempt + 1, e.what());
      if (label.raw_response.empty()) label.raw_response = std::string("transport error: ") + e.what();
    } catch (const ParseError& e) {
      spdlog::warn("annotate {}: attempt {} unparseable response", item.id, attempt + 1);
    }
    if (attempt < config.max_retries) backoff(config, attempt);
  }
  label.distractor_text.clear();
  label.status = LabelStatus::kFailed;
  return label;
}

}  // namespace

std::vector<PseudoLabel> generate_pseudo_labels(const std::vector<RCItem>& items, const TeacherConfig& config,
                                                const PromptTemplate& tmpl, ChatClient& client,
                                                const AnnotationOptions& options) {
  config.validate();
  validate(tmpl);
  for (const auto& item : items) {
    if (item.split != Split::kTrain) {
      throw std::invalid_argument("pseudo labels are only generated for train items; got " + item.id);
    }
  }

  std::unordered_map<std::string, PseudoLabel> journalled;
  if (options.journal && std::filesystem::exists(*options.journal)) {
    for (auto& label : read_labels(*options.journal)) journalled.insert_or_assign(label.item_id, std::move(label));
  }

  std::vector<size_t> pending;
  for (size_t i = 0; i < items.size(); ++i) {
    auto it = journalled.find(items[i].id);
    const bool have = it != journalled.end() && (it->second.status == LabelStatus::kOk || !options.retry_failed);
    if (!have) pending.push_back(i);
  }

  std::vector<std::optional<PseudoLabel>> fresh(pending.size());
  std::vector<bool> done(pending.size(), false);
  size_t flushed = 0;
  std::mutex journal_mutex;
  std::atomic<size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;

  // Records are appended in item order whatever order workers finish in, so
  // the journal of a completed run does not depend on scheduling.
  auto publish = [&](size_t slot, PseudoLabel label) {
    std::lock_guard lock(journal_mutex);
    fresh[slot] = std::move(label);
    done[slot] = true;
    while (flushed < pending.size() && done[flushed]) {
      if (options.journal) io::append_jsonl(*options.journal, to_json(*fresh[flushed]));
      ++flushed;
    }
  };

  auto worker = [&] {
    while (!abort.load()) {
      const size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      try {
        publish(slot, annotate_one(items[pending[slot]], config, tmpl, client, options.demonstrations));
      } catch (...) {
        std::lock_guard lock(journal_mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  const size_t workers = std::min(pending.size(), static_cast<size_t>(config.concurrency_limit));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<PseudoLabel> labels;
  labels.reserve(items.size());
  size_t slot = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    if (slot < pending.size() && pending[slot] == i) {
      labels.push_back(std::move(*fresh[slot]));
      ++slot;
    } else {
      labels.push_back(journalled.at(items[i].id));
    }
  }
  return labels;
}

std::map<std::string, RCItem> index_items(const std::vector<RCItem>& items) {
  std::map<std::string, RCItem> index;
  for (const auto& item : items) index.emplace(item.id, item);
  return index;
}

FilterResult filter_pseudo_labels(const std::vector<PseudoLabel>& labels, const std::map<std::string, RCItem>& items,
                                  double threshold) {
  FilterResult result;
  for (PseudoLabel label : labels) {
    auto it = items.find(label.item_id);
    if (it == items.end()) throw std::invalid_argument("label refers to unknown item " + label.item_id);
    if (label.status == LabelStatus::kOk && !label.distractor_text.empty()) {
      label.bleu4_vs_answer = metrics::bleu4(label.distractor_text, it->second.answer);
      label.kept = *label.bleu4_vs_answer <= threshold;
    } else {
      label.bleu4_vs_answer.reset();
      label.kept = false;
    }
    (label.kept ? result.kept : result.dropped).push_back(std::move(label));
  }
  return result;
}

ZeroShotResult zero_shot_generate(const RCItem& item, const TeacherConfig& config, const PromptTemplate& tmpl,
                                  ChatClient& client) {
  config.validate();
  const ChatRequest request = make_request(config, render_prompt(item, tmpl));
  const auto expected = static_cast<size_t>(std::max(tmpl.expected_result_count, 3));
  ZeroShotResult best;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    ++best.attempts;
    std::string raw;
    try {
      raw = client.complete(request);
      auto results = parse_result_tags(with_primed_tag(tmpl, raw), 3);
      if (results.size() >= expected) {
        results.resize(expected);
        best.distractors = std::move(results);
        best.raw_response = std::move(raw);
        best.complete = true;
        return best;
      }
      if (results.size() > best.distractors.size()) {
        best.distractors = std::move(results);
        best.raw_response = raw;
      }
      spdlog::warn("zero-shot {}: {} of {} results", item.id, best.distractors.size(), expected);
    } catch (const TransportError& e) {
      spdlog::warn("zero-shot {}: transport failure: {}", item.id, e.what());
    } catch (const ParseError&) {
      spdlog::warn("zero-shot {}: unparseable response", item.id);
      if (best.raw_response.empty()) best.raw_response = raw;
    }
    if (attempt < config.max_retries) backoff(config, attempt);
  }
  best.complete = false;
  return best;
}

}  // namespace udg
