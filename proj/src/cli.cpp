#include "udg/cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "udg/errors.hpp"
#include "udg/prompt.hpp"

namespace udg::cli {

namespace fs = std::filesystem;
using io::Json;

PipelineConfig::PipelineConfig() {
  teacher.template_id = "pseudo_gpt";
  judge.template_id = "judge";
  judge.teacher.model_name = "gpt-4";
}

void PipelineConfig::validate() const {
  teacher.teacher.validate();
  judge.teacher.validate();
  schedule.validate();
  decode.validate();
  if (!(data_ratio > 0.0 && data_ratio <= 1.0)) throw ConfigError("data_ratio must be in (0, 1]");
  if (filter_threshold < 0.0) throw ConfigError("filter threshold must be >= 0");
  if (demonstrations < 0) throw ConfigError("demonstrations must be >= 0");
  if (model.tiny.embedding_dim < 1 || model.tiny.hidden_dim < 1) throw ConfigError("model dimensions must be >= 1");
}

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
  }
}

Json to_json(const ClientSettings& s) {
  return Json{{"client", s.client},
              {"endpoint", s.endpoint},
              {"path", s.path},
              {"api_key_env", s.api_key_env},
              {"template", s.template_id},
              {"model_name", s.teacher.model_name},
              {"temperature", s.teacher.temperature},
              {"sampling_enabled", s.teacher.sampling_enabled},
              {"max_retries", s.teacher.max_retries},
              {"request_timeout_s", s.teacher.request_timeout.count()},
              {"concurrency_limit", s.teacher.concurrency_limit},
              {"retry_backoff_ms", s.teacher.retry_backoff.count()}};
}

ClientSettings client_from_json(const Json& j, ClientSettings s, const std::string& section) {
  reject_unknown(j,
                 {"client", "endpoint", "path", "api_key_env", "template", "model_name", "temperature",
                  "sampling_enabled", "max_retries", "request_timeout_s", "concurrency_limit", "retry_backoff_ms"},
                 section);
  s.client = j.value("client", s.client);
  s.endpoint = j.value("endpoint", s.endpoint);
  s.path = j.value("path", s.path);
  s.api_key_env = j.value("api_key_env", s.api_key_env);
  s.template_id = j.value("template", s.template_id);
  s.teacher.model_name = j.value("model_name", s.teacher.model_name);
  s.teacher.temperature = j.value("temperature", s.teacher.temperature);
  s.teacher.sampling_enabled = j.value("sampling_enabled", s.teacher.sampling_enabled);
  s.teacher.max_retries = j.value("max_retries", s.teacher.max_retries);
  s.teacher.request_timeout = std::chrono::seconds(j.value("request_timeout_s", s.teacher.request_timeout.count()));
  s.teacher.concurrency_limit = j.value("concurrency_limit", s.teacher.concurrency_limit);
  s.teacher.retry_backoff = std::chrono::milliseconds(j.value("retry_backoff_ms", s.teacher.retry_backoff.count()));
  return s;
}

}  // namespace

Json to_json(const PipelineConfig& c) {
  Json decode = udg::to_json(c.decode);
  decode.erase("normalisation");
  return Json{{"dataset", {{"paths", c.dataset_paths}, {"kind", udg::to_string(c.dataset_kind)}}},
              {"teacher", to_json(c.teacher)},
              {"judge", to_json(c.judge)},
              {"demonstrations", c.demonstrations},
              {"filter", {{"threshold", c.filter_threshold}}},
              {"schedule",
               {{"stage1_epochs", c.schedule.stage1_epochs},
                {"stage2_epochs", c.schedule.stage2_epochs},
                {"max_learning_rate", c.schedule.max_learning_rate},
                {"batch_size", c.schedule.batch_size},
                {"warmup_ratio", c.schedule.warmup_ratio}}},
              {"model",
               {{"embedding_dim", c.model.tiny.embedding_dim},
                {"hidden_dim", c.model.tiny.hidden_dim},
                {"max_source_tokens", c.model.tiny.max_source_tokens},
                {"max_target_tokens", c.model.tiny.max_target_tokens},
                {"vocab_max_size", c.model.vocab_max_size},
                {"vocab_min_count", c.model.vocab_min_count}}},
              {"decode", decode},
              {"scorer",
               {{"epochs", c.scorer.epochs},
                {"learning_rate", c.scorer.learning_rate},
                {"l2", c.scorer.l2},
                {"hash_bits", c.scorer.hash_bits},
                {"max_class_ratio", c.scorer.max_class_ratio}}},
              {"data_ratio", c.data_ratio},
              {"training_mode", udg::to_string(c.training_mode)},
              {"seed", c.seed}};
}

PipelineConfig config_from_json(const Json& j) {
  PipelineConfig c;
  reject_unknown(j,
                 {"dataset", "teacher", "judge", "demonstrations", "filter", "schedule", "model", "decode", "scorer",
                  "data_ratio", "training_mode", "seed"},
                 "config");
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      reject_unknown(d, {"paths", "kind"}, "dataset");
      c.dataset_paths = d.value("paths", c.dataset_paths);
      if (d.contains("kind")) c.dataset_kind = parse_dataset_kind(d["kind"].get<std::string>());
    }
    if (j.contains("teacher")) c.teacher = client_from_json(j["teacher"], c.teacher, "teacher");
    if (j.contains("judge")) c.judge = client_from_json(j["judge"], c.judge, "judge");
    c.demonstrations = j.value("demonstrations", c.demonstrations);
    if (j.contains("filter")) {
      reject_unknown(j["filter"], {"threshold"}, "filter");
      c.filter_threshold = j["filter"].value("threshold", c.filter_threshold);
    }
    if (j.contains("schedule")) {
      reject_unknown(j["schedule"],
                     {"stage1_epochs", "stage2_epochs", "max_learning_rate", "batch_size", "warmup_ratio"}, "schedule");
      c.schedule = schedule_from_json(j["schedule"], c.schedule);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m,
                     {"embedding_dim", "hidden_dim", "max_source_tokens", "max_target_tokens", "vocab_max_size",
                      "vocab_min_count"},
                     "model");
      c.model.tiny.embedding_dim = m.value("embedding_dim", c.model.tiny.embedding_dim);
      c.model.tiny.hidden_dim = m.value("hidden_dim", c.model.tiny.hidden_dim);
      c.model.tiny.max_source_tokens = m.value("max_source_tokens", c.model.tiny.max_source_tokens);
      c.model.tiny.max_target_tokens = m.value("max_target_tokens", c.model.tiny.max_target_tokens);
      c.model.vocab_max_size = m.value("vocab_max_size", c.model.vocab_max_size);
      c.model.vocab_min_count = m.value("vocab_min_count", c.model.vocab_min_count);
    }
    if (j.contains("decode")) {
      reject_unknown(j["decode"],
                     {"t", "r", "beam_size", "num_outputs", "jaccard_threshold", "max_length", "length_penalty",
                      "ccd_mode", "constraint", "intermediate"},
                     "decode");
      c.decode = decode_config_from_json(j["decode"], c.decode);
    }
    if (j.contains("scorer")) {
      const auto& s = j["scorer"];
      reject_unknown(s, {"epochs", "learning_rate", "l2", "hash_bits", "max_class_ratio"}, "scorer");
      c.scorer.epochs = s.value("epochs", c.scorer.epochs);
      c.scorer.learning_rate = s.value("learning_rate", c.scorer.learning_rate);
      c.scorer.l2 = s.value("l2", c.scorer.l2);
      c.scorer.hash_bits = s.value("hash_bits", c.scorer.hash_bits);
      c.scorer.max_class_ratio = s.value("max_class_ratio", c.scorer.max_class_ratio);
    }
    c.data_ratio = j.value("data_ratio", c.data_ratio);
    if (j.contains("training_mode")) c.training_mode = parse_training_mode(j["training_mode"].get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return config_from_json(Json::parse(io::read_file(path)));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::string config_hash(const PipelineConfig& config) { return io::json_hash(to_json(config)); }

std::unique_ptr<ChatClient> make_client(const ClientSettings& settings, bool judge) {
  if (settings.client == "stub") {
    return std::make_unique<StubChatClient>(judge ? StubChatClient::Responder(tie_judge_response)
                                                  : StubChatClient::Responder(heuristic_teacher_response));
  }
  if (settings.client != "http") throw ConfigError("unknown client '" + settings.client + "' (expected http or stub)");
  const char* key = std::getenv(settings.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("environment variable " + settings.api_key_env + " holding the API key is not set");
  }
  return std::make_unique<HttpChatClient>(
      HttpClientConfig{settings.endpoint, settings.path, key, settings.teacher.request_timeout});
}

fs::path manifest_path(const fs::path& output) {
  if (fs::is_directory(output)) return output / "run_manifest.json";
  return fs::path(output.string() + ".manifest.json");
}

namespace {

std::string hash_path(const fs::path& path) {
  if (!fs::is_directory(path)) return io::sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Json listing = Json::array();
  for (const auto& f : files) listing.push_back({fs::relative(f, path).generic_string(), io::sha256_file(f)});
  return io::json_hash(listing);
}

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

struct Run {
  std::string command;
  std::vector<std::string> args;
  PipelineConfig config;
  std::vector<fs::path> inputs;
  Json extra = Json::object();

  void finish(const std::vector<fs::path>& outputs) const {
    Json in = Json::object();
    for (const auto& p : inputs) in[p.string()] = hash_path(p);
    Json out = Json::object();
    for (const auto& p : outputs) out[p.string()] = hash_path(p);
    std::vector<std::string> argv = args;
    const Json manifest{{"command", command},
                        {"argv", argv},
                        {"cwd", fs::current_path().string()},
                        {"config", to_json(config)},
                        {"config_hash", config_hash(config)},
                        {"seed", config.seed},
                        {"inputs", in},
                        {"outputs", out},
                        {"extra", extra}};
    for (const auto& p : outputs) io::write_file(manifest_path(p), manifest.dump(2) + "\n");
  }
};

std::vector<RCItem> read_dataset(const fs::path& path) {
  require_exists(path, "dataset");
  return read_items(path);
}

std::vector<PseudoLabel> read_label_file(const fs::path& path) {
  require_exists(path, "label file");
  return read_labels(path);
}

std::string fmt_stats(const DatasetStats& s) {
  return "qa pairs: " + std::to_string(s.qa_pair_count) + ", passages: " + std::to_string(s.passage_count) +
         ", pseudo labels: " + std::to_string(s.pseudo_label_count);
}

// Split filter: "train", "test" or "all".
std::vector<RCItem> select_split(const std::vector<RCItem>& items, const std::string& split) {
  if (split == "all") return items;
  return filter_split(items, parse_split(split));
}

int cmd_ingest(Run& run, const std::vector<std::string>& inputs, const fs::path& output, std::ostream& out) {
  std::vector<std::string> paths = inputs.empty() ? run.config.dataset_paths : inputs;
  if (paths.empty()) throw ConfigError("no dataset path given (use --input or dataset.paths)");
  std::vector<RCItem> items;
  size_t dropped = 0;
  std::set<std::string> seen;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw IngestError("dataset path does not exist: " + p);
    auto result = ingest(p, run.config.dataset_kind);
    dropped += result.dropped.size();
    for (auto& item : result.items) {
      if (!seen.insert(item.id).second) throw IngestError("duplicate item id across inputs: " + item.id);
      items.push_back(std::move(item));
    }
    run.inputs.emplace_back(p);
  }
  write_items(output, items);
  const auto s = stats(items);
  const auto train = stats(filter_split(items, Split::kTrain));
  const auto test = stats(filter_split(items, Split::kTest));
  out << "ingested " << items.size() << " records (" << fmt_stats(s) << "); dropped " << dropped << "\n";
  out << "train: " << fmt_stats(train) << "\ntest: " << fmt_stats(test) << "\n";
  run.extra = {{"records", items.size()},
               {"dropped", dropped},
               {"qa_pairs", s.qa_pair_count},
               {"passages", s.passage_count},
               {"train_qa_pairs", train.qa_pair_count},
               {"test_qa_pairs", test.qa_pair_count}};
  run.finish({output});
  return kSuccess;
}

int cmd_annotate(Run& run, const fs::path& dataset, const fs::path& output, std::optional<fs::path> journal,
                 bool retry_failed, std::ostream& out) {
  const auto items = filter_split(read_dataset(dataset), Split::kTrain);
  run.inputs.insert(run.inputs.end(), {dataset});
  const auto tmpl = resolve_template(run.config.teacher.template_id);
  auto client = make_client(run.config.teacher, false);
  AnnotationOptions options;
  options.journal = journal ? *journal : fs::path(output.string() + ".journal.jsonl");
  options.retry_failed = retry_failed;
  if (run.config.demonstrations > 0) {
    std::vector<std::string> pool;
    for (const auto& item : items) {
      if (!item.reference_distractors.empty()) pool.push_back(format_demonstration(item, item.reference_distractors[0]));
    }
    options.demonstrations =
        select_demonstrations(pool, static_cast<size_t>(run.config.demonstrations), run.config.seed);
  }
  const auto labels = generate_pseudo_labels(items, run.config.teacher.teacher, tmpl, *client, options);
  write_labels(output, labels);
  const auto failed = std::count_if(labels.begin(), labels.end(),
                                    [](const PseudoLabel& l) { return l.status == LabelStatus::kFailed; });
  out << "annotated " << labels.size() << " train items (" << failed << " failed)\n";
  run.extra = {{"labels", labels.size()}, {"failed", failed}, {"template", tmpl.template_id}};
  run.finish({output});
  return kSuccess;
}

int cmd_filter(Run& run, const fs::path& labels_path, const fs::path& dataset, fs::path kept_path,
               fs::path dropped_path, std::ostream& out) {
  const auto labels = read_label_file(labels_path);
  const auto items = read_dataset(dataset);
  run.inputs.insert(run.inputs.end(), {labels_path, dataset});
  const auto result = filter_pseudo_labels(labels, index_items(items), run.config.filter_threshold);
  if (kept_path.empty()) kept_path = fs::path(labels_path.string() + ".kept.jsonl");
  if (dropped_path.empty()) dropped_path = fs::path(labels_path.string() + ".dropped.jsonl");
  write_labels(kept_path, result.kept);
  write_labels(dropped_path, result.dropped);
  std::vector<std::string> kept_ids;
  for (const auto& l : result.kept) kept_ids.push_back(l.item_id);
  out << "kept " << result.kept.size() << ", dropped " << result.dropped.size() << " at threshold "
      << run.config.filter_threshold << "\n";
  out << "train after filtering: " << fmt_stats(stats(filter_split(items, Split::kTrain), kept_ids)) << "\n";
  run.extra = {{"kept", result.kept.size()}, {"dropped", result.dropped.size()},
               {"threshold", run.config.filter_threshold}};
  run.finish({kept_path, dropped_path});
  return kSuccess;
}

int cmd_train(Run& run, const fs::path& dataset, const fs::path& labels_path, const fs::path& output,
              std::ostream& out) {
  const auto& c = run.config;
  const auto all_train = filter_split(read_dataset(dataset), Split::kTrain);
  const auto labels = read_label_file(labels_path);
  run.inputs.insert(run.inputs.end(), {dataset, labels_path});
  const auto items = sample_ratio(all_train, c.data_ratio, c.seed);

  std::set<std::string> sampled;
  for (const auto& item : items) sampled.insert(item.id);
  std::vector<PseudoLabel> kept;
  for (const auto& l : labels) {
    if (l.kept && sampled.count(l.item_id)) kept.push_back(l);
  }
  std::vector<std::string> texts;
  for (const auto& item : items) {
    texts.push_back(item.passage);
    texts.push_back(item.question);
    texts.push_back(item.answer);
  }
  for (const auto& l : kept) texts.push_back(l.distractor_text);
  TinyModelConfig tiny = c.model.tiny;
  tiny.seed = c.seed;
  const TinySeq2Seq initial(Vocabulary::build(texts, c.model.vocab_max_size, c.model.vocab_min_count), tiny);

  const auto pair = run_training(items, kept, initial, c.schedule, c.training_mode);
  const Json stages{{"stage1", {{"initial_loss", pair.stage1.initial_loss},
                                {"final_loss", pair.stage1.final_loss},
                                {"epoch_losses", pair.stage1.epoch_losses}}},
                    {"stage2", {{"initial_loss", pair.stage2.initial_loss},
                                {"final_loss", pair.stage2.final_loss},
                                {"epoch_losses", pair.stage2.epoch_losses}}},
                    {"answer_examples", pair.answer_example_count},
                    {"distractor_examples", pair.distractor_example_count},
                    {"sampled_items", items.size()},
                    {"data_ratio", c.data_ratio},
                    {"config_hash", config_hash(c)},
                    {"vocab_size", initial.vocab_size()}};
  fs::create_directories(output);
  save_model_dir(output / "answer_model", *pair.answer_model, Task::kAnswer, c.schedule, c.training_mode,
                 pair.data_hash, stages);
  save_model_dir(output / "distractor_model", *pair.distractor_model, Task::kDistractor, c.schedule, c.training_mode,
                 pair.data_hash, stages);
  out << "mode " << udg::to_string(c.training_mode) << ": " << items.size() << " items, " << pair.answer_example_count
      << " ANS / " << pair.distractor_example_count << " DIS examples, vocab " << initial.vocab_size() << "\n";
  if (!pair.stage1.epoch_losses.empty()) {
    out << "stage 1 loss " << pair.stage1.initial_loss << " -> " << pair.stage1.final_loss << "\n";
  }
  if (!pair.stage2.epoch_losses.empty()) {
    out << "stage 2 loss " << pair.stage2.initial_loss << " -> " << pair.stage2.final_loss << "\n";
  }
  run.extra = stages;
  run.extra["training_mode"] = udg::to_string(c.training_mode);
  run.finish({output});
  return kSuccess;
}

int cmd_generate(Run& run, const fs::path& models, const fs::path& dataset, const fs::path& output,
                 const std::string& split, int limit, std::ostream& out) {
  require_exists(models / "distractor_model", "distractor model");
  require_exists(models / "answer_model", "answer model");
  const auto m_d = load_model_dir(models / "distractor_model");
  const auto m_a = load_model_dir(models / "answer_model");
  auto items = select_split(read_dataset(dataset), split);
  run.inputs.insert(run.inputs.end(), {models, dataset});
  if (limit > 0 && items.size() > static_cast<size_t>(limit)) items.resize(static_cast<size_t>(limit));
  std::vector<GenerationResult> results;
  for (const auto& item : items) results.push_back(generate_distractors(*m_d, *m_a, item, run.config.decode));
  write_generations(output, results);
  const auto model_manifest = load_model_manifest(models / "distractor_model");
  out << "generated distractors for " << results.size() << " items (ccd " << udg::to_string(run.config.decode.ccd_mode)
      << ", constraint " << (run.config.decode.constraint ? "on" : "off") << ")\n";
  run.extra = {{"items", results.size()},
               {"decode", udg::to_json(run.config.decode)},
               {"decode_config_hash", udg::config_hash(run.config.decode)},
               {"training_mode", model_manifest.value("training_mode", "")}};
  run.finish({output});
  return kSuccess;
}

int cmd_train_scorer(Run& run, const fs::path& dataset, const fs::path& output, std::ostream& out) {
  const auto items = read_dataset(dataset);
  run.inputs.insert(run.inputs.end(), {dataset});
  std::vector<std::string> excluded;
  for (const auto& item : items) {
    if (item.split == Split::kTest) excluded.push_back(item.id);
  }
  ScorerTrainingOptions options = run.config.scorer;
  options.seed = run.config.seed;
  const auto scorer = train_faithful_scorer(items, options, excluded);
  scorer->save(output);
  out << "trained faithful scorer on " << scorer->manifest().value("positives", 0) << " positives / "
      << scorer->manifest().value("negatives", 0) << " negatives\n";
  run.extra = scorer->manifest();
  run.finish({output});
  return kSuccess;
}

int cmd_evaluate(Run& run, const fs::path& generations_path, const fs::path& dataset, const fs::path& scorer_dir,
                 const fs::path& output, const std::string& name, std::ostream& out) {
  require_exists(generations_path, "generations file");
  const auto generations = read_generations(generations_path);
  const auto items = read_dataset(dataset);
  run.inputs.insert(run.inputs.end(), {generations_path, dataset});
  std::unique_ptr<FaithfulScorer> scorer;
  if (!scorer_dir.empty()) {
    require_exists(scorer_dir, "scorer");
    scorer = load_faithful_scorer(scorer_dir);
    run.inputs.push_back(scorer_dir);
  }
  const auto report = evaluate_run(generations, items, scorer.get());
  const std::string label = name.empty() ? generations_path.stem().string() : name;
  Json record = udg::to_json(report);
  record["name"] = label;
  record["config_hash"] = config_hash(run.config);
  record["seed"] = run.config.seed;
  record["generation_config_hash"] = generations.front().config_hash;
  io::write_jsonl(output, {record});
  out << render_table({{label, report}});
  run.extra = {{"report", udg::to_json(report)}};
  run.finish({output});
  return kSuccess;
}

int cmd_judge(Run& run, const fs::path& a_path, const fs::path& b_path, const fs::path& dataset,
              const std::string& aspect_name, const fs::path& output, std::ostream& out) {
  require_exists(a_path, "generations file");
  require_exists(b_path, "generations file");
  const auto a = read_generations(a_path);
  const auto b = read_generations(b_path);
  const auto index = index_items(read_dataset(dataset));
  run.inputs.insert(run.inputs.end(), {a_path, b_path, dataset});
  const auto aspect = parse_judge_aspect(aspect_name);
  auto client = make_client(run.config.judge, true);
  std::map<std::string, const GenerationResult*> b_index;
  for (const auto& g : b) b_index.emplace(g.item_id, &g);
  JudgeTally tally;
  std::vector<Json> records;
  for (const auto& ga : a) {
    auto it = b_index.find(ga.item_id);
    if (it == b_index.end()) continue;
    auto item_it = index.find(ga.item_id);
    if (item_it == index.end()) throw std::invalid_argument("generation for unknown item " + ga.item_id);
    const size_t n = std::min(ga.distractors.size(), it->second->distractors.size());
    for (size_t i = 0; i < n; ++i) {
      const auto verdict = judge_pairwise(item_it->second, ga.distractors[i], it->second->distractors[i], aspect,
                                          *client, run.config.seed + i, run.config.judge.teacher);
      tally.add(verdict);
      Json record = udg::to_json(verdict);
      record["item_id"] = ga.item_id;
      record["position"] = i;
      records.push_back(std::move(record));
    }
  }
  io::write_jsonl(output, records);
  const Json summary = udg::to_json(tally);
  out << "aspect " << aspect_name << ": win " << tally.win << ", tie " << tally.tie << ", lose " << tally.lose
      << ", parse failures " << tally.parse_failures << "\n";
  run.extra = {{"tally", summary}, {"aspect", aspect_name}};
  run.finish({output});
  return kSuccess;
}

int cmd_baseline(Run& run, const fs::path& dataset, const fs::path& output, const std::string& split, int limit,
                 std::ostream& out) {
  auto items = select_split(read_dataset(dataset), split);
  run.inputs.insert(run.inputs.end(), {dataset});
  if (limit > 0 && items.size() > static_cast<size_t>(limit)) items.resize(static_cast<size_t>(limit));
  const auto tmpl = resolve_template(run.config.teacher.template_id);
  auto client = make_client(run.config.teacher, false);
  std::vector<GenerationResult> results;
  int incomplete = 0;
  for (const auto& item : items) {
    const auto z = zero_shot_generate(item, run.config.teacher.teacher, tmpl, *client);
    GenerationResult g;
    g.item_id = item.id;
    g.config_hash = config_hash(run.config);
    g.distractors = z.distractors;
    if (!z.complete) ++incomplete;
    g.distractors.resize(3);
    g.scores.assign(3, 0.0);
    g.below_diversity.assign(3, false);
    results.push_back(std::move(g));
  }
  write_generations(output, results);
  out << "zero-shot baseline for " << results.size() << " items (" << incomplete << " incomplete)\n";
  run.extra = {{"items", results.size()}, {"incomplete", incomplete}, {"template", tmpl.template_id}};
  run.finish({output});
  return kSuccess;
}

int cmd_replay(const fs::path& manifest_file, std::ostream& out, std::ostream& err) {
  require_exists(manifest_file, "manifest");
  const auto manifest = Json::parse(io::read_file(manifest_file));
  const fs::path cwd = manifest.at("cwd").get<std::string>();
  const auto previous = fs::current_path();
  fs::current_path(cwd);
  struct Restore {
    fs::path dir;
    ~Restore() { fs::current_path(dir); }
  } restore{previous};
  for (const auto& [path, hash] : manifest.at("inputs").items()) {
    if (!fs::exists(path) || hash_path(path) != hash.get<std::string>()) {
      throw ConfigError("input " + path + " changed since the recorded run");
    }
  }
  const int code = run(manifest.at("argv").get<std::vector<std::string>>(), out, err);
  if (code != kSuccess) return code;
  int mismatches = 0;
  for (const auto& [path, hash] : manifest.at("outputs").items()) {
    const bool same = hash_path(path) == hash.get<std::string>();
    out << (same ? "match    " : "MISMATCH ") << path << "\n";
    if (!same) ++mismatches;
  }
  if (mismatches > 0) {
    err << "replay produced " << mismatches << " differing output(s)\n";
    return kUserError;
  }
  return kSuccess;
}

// Position of --config's value in args, if any.
std::optional<std::string> find_config_arg(const std::vector<std::string>& args) {
  for (size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) return args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) return args[k].substr(9);
  }
  return std::nullopt;
}

void add_decode_flags(CLI::App* sub, DecodeConfig& d, std::string& ccd_mode, std::string& constraint,
                      std::string& intermediate) {
  sub->add_option("--t", d.t, "CCD scaling temperature");
  sub->add_option("--r", d.r, "number of top-ranked tokens exempt from adjustment");
  sub->add_option("--beam-size", d.beam_size, "beam width");
  sub->add_option("--num-outputs", d.num_outputs, "distractors per item");
  sub->add_option("--jaccard-threshold", d.jaccard_threshold, "maximum pairwise Jaccard similarity");
  sub->add_option("--max-length", d.max_length, "maximum generated tokens");
  sub->add_option("--length-penalty", d.length_penalty, "length penalty exponent (1 = plain sum)");
  sub->add_option("--ccd-mode", ccd_mode, "off | ratio | scaled")->check(CLI::IsMember({"off", "ratio", "scaled"}));
  sub->add_option("--constraint", constraint, "plausibility constraint on | off")->check(CLI::IsMember({"on", "off"}));
  sub->add_option("--intermediate", intermediate, "greedy | beam_top1")
      ->check(CLI::IsMember({"greedy", "beam_top1"}));
}

void add_schedule_flags(CLI::App* sub, PipelineConfig& c, std::string& training_mode) {
  sub->add_option("--stage1-epochs", c.schedule.stage1_epochs, "answer-generation epochs");
  sub->add_option("--stage2-epochs", c.schedule.stage2_epochs, "distractor-generation epochs");
  sub->add_option("--learning-rate", c.schedule.max_learning_rate, "peak learning rate");
  sub->add_option("--batch-size", c.schedule.batch_size, "examples per optimizer step");
  sub->add_option("--warmup-ratio", c.schedule.warmup_ratio, "fraction of steps used for warmup");
  sub->add_option("--data-ratio", c.data_ratio, "fraction of train items to use");
  sub->add_option("--training-mode", training_mode, "pseudo_only | answer_only | mixed | two_stage")
      ->check(CLI::IsMember({"pseudo_only", "answer_only", "mixed", "two_stage"}));
  sub->add_option("--embedding-dim", c.model.tiny.embedding_dim, "tiny student embedding size");
  sub->add_option("--hidden-dim", c.model.tiny.hidden_dim, "tiny student hidden size");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  PipelineConfig config;
  if (auto path = find_config_arg(args)) config = load_config(*path);

  CLI::App app{"Unsupervised distractor generation pipeline", "udg"};
  app.require_subcommand(1);
  std::string config_file;
  int verbosity = 0;
  app.add_option("--config", config_file, "pipeline config file (JSON)");
  app.add_option("--seed", config.seed, "global random seed");
  app.add_flag("-v,--verbose", verbosity, "more logging");

  std::string kind = std::string(udg::to_string(config.dataset_kind));
  std::string ccd_mode = std::string(udg::to_string(config.decode.ccd_mode));
  std::string constraint = config.decode.constraint ? "on" : "off";
  std::string intermediate = std::string(udg::to_string(config.decode.intermediate));
  std::string training_mode = std::string(udg::to_string(config.training_mode));

  std::vector<std::string> inputs;
  std::string dataset, output, labels, kept, dropped, models, generations, scorer, name, split = "test", aspect =
                                                                                                          "distracting";
  std::string gen_a, gen_b, journal, manifest;
  bool retry_failed = false;
  int limit = 0;

  auto* ingest_cmd = app.add_subcommand("ingest", "normalize a native RACE/Dream tree");
  ingest_cmd->add_option("--input", inputs, "dataset root(s)");
  ingest_cmd->add_option("--kind", kind, "race | dream")->check(CLI::IsMember({"race", "dream"}));
  ingest_cmd->add_option("--output", output, "normalized dataset file")->required();

  auto* annotate_cmd = app.add_subcommand("annotate", "request one pseudo distractor per train item");
  annotate_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  annotate_cmd->add_option("--output", output, "pseudo-label file")->required();
  annotate_cmd->add_option("--template", config.teacher.template_id, "builtin template id or template file");
  annotate_cmd->add_option("--client", config.teacher.client, "http | stub");
  annotate_cmd->add_option("--model-name", config.teacher.teacher.model_name, "teacher model");
  annotate_cmd->add_option("--endpoint", config.teacher.endpoint, "teacher endpoint");
  annotate_cmd->add_option("--journal", journal, "response journal (default: <output>.journal.jsonl)");
  annotate_cmd->add_option("--demonstrations", config.demonstrations, "few-shot demonstrations per prompt");
  annotate_cmd->add_flag("--retry-failed", retry_failed, "re-request journalled failures");

  auto* filter_cmd = app.add_subcommand("filter", "drop pseudo labels too similar to the answer");
  filter_cmd->add_option("--labels", labels, "pseudo-label file")->required();
  filter_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  filter_cmd->add_option("--threshold", config.filter_threshold, "maximum BLEU-4 against the answer");
  filter_cmd->add_option("--kept", kept, "kept labels (default: <labels>.kept.jsonl)");
  filter_cmd->add_option("--dropped", dropped, "dropped labels (default: <labels>.dropped.jsonl)");

  auto* train_cmd = app.add_subcommand("train", "dual-task training of the answer and distractor models");
  train_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  train_cmd->add_option("--labels", labels, "kept pseudo labels")->required();
  train_cmd->add_option("--output", output, "model directory")->required();
  add_schedule_flags(train_cmd, config, training_mode);

  auto* generate_cmd = app.add_subcommand("generate", "two-stage CCD inference");
  generate_cmd->add_option("--models", models, "model directory written by train")->required();
  generate_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  generate_cmd->add_option("--output", output, "generation file")->required();
  generate_cmd->add_option("--split", split, "train | test | all")->check(CLI::IsMember({"train", "test", "all"}));
  generate_cmd->add_option("--limit", limit, "decode at most this many items");
  add_decode_flags(generate_cmd, config.decode, ccd_mode, constraint, intermediate);

  auto* scorer_cmd = app.add_subcommand("train-scorer", "fit the faithful-score classifier on train items");
  scorer_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  scorer_cmd->add_option("--output", output, "scorer directory")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "metric report for a generation file");
  evaluate_cmd->add_option("--generations", generations, "generation file")->required();
  evaluate_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  evaluate_cmd->add_option("--scorer", scorer, "faithful scorer directory");
  evaluate_cmd->add_option("--output", output, "report file")->required();
  evaluate_cmd->add_option("--name", name, "row label");

  auto* judge_cmd = app.add_subcommand("judge", "pairwise LLM judging of two generation files");
  judge_cmd->add_option("--a", gen_a, "generation file of the system under test")->required();
  judge_cmd->add_option("--b", gen_b, "generation file of the comparison system")->required();
  judge_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  judge_cmd->add_option("--aspect", aspect, "quality | distracting")
      ->check(CLI::IsMember({"quality", "distracting"}));
  judge_cmd->add_option("--output", output, "verdict file")->required();
  judge_cmd->add_option("--client", config.judge.client, "http | stub");
  judge_cmd->add_option("--model-name", config.judge.teacher.model_name, "judge model");

  auto* baseline_cmd = app.add_subcommand("baseline", "zero-shot three-distractor LLM baseline");
  baseline_cmd->add_option("--dataset", dataset, "normalized dataset")->required();
  baseline_cmd->add_option("--output", output, "generation file")->required();
  baseline_cmd->add_option("--split", split, "train | test | all")->check(CLI::IsMember({"train", "test", "all"}));
  baseline_cmd->add_option("--limit", limit, "at most this many items");
  baseline_cmd->add_option("--client", config.teacher.client, "http | stub");
  baseline_cmd->add_option("--template", config.teacher.template_id, "builtin template id or template file");

  auto* replay_cmd = app.add_subcommand("replay", "re-run a recorded command and compare output hashes");
  replay_cmd->add_option("--manifest", manifest, "manifest sidecar")->required();

  std::vector<const char*> argv{"udg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kUserError;
  }
  spdlog::set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info
                                                                           : spdlog::level::warn);

  if (baseline_cmd->parsed() && baseline_cmd->count("--template") == 0 && config.teacher.template_id == "pseudo_gpt") {
    config.teacher.template_id = "zeroshot_gpt";
  }
  config.dataset_kind = parse_dataset_kind(kind);
  config.decode.ccd_mode = parse_ccd_mode(ccd_mode);
  config.decode.constraint = constraint == "on";
  config.decode.intermediate = parse_intermediate_mode(intermediate);
  config.training_mode = parse_training_mode(training_mode);
  config.schedule.seed = config.seed;
  config.validate();

  Run run;
  run.args = args;
  run.config = config;
  if (!config_file.empty()) run.inputs.emplace_back(config_file);
  const auto started = [&](const std::string& command) {
    run.command = command;
    spdlog::info("{} (config {})", command, config_hash(config));
  };

  int code = kSuccess;
  if (ingest_cmd->parsed()) {
    started("ingest");
    code = cmd_ingest(run, inputs, output, out);
  } else if (annotate_cmd->parsed()) {
    started("annotate");
    code = cmd_annotate(run, dataset, output, journal.empty() ? std::nullopt : std::optional<fs::path>(journal),
                        retry_failed, out);
  } else if (filter_cmd->parsed()) {
    started("filter");
    code = cmd_filter(run, labels, dataset, kept, dropped, out);
  } else if (train_cmd->parsed()) {
    started("train");
    code = cmd_train(run, dataset, labels, output, out);
  } else if (generate_cmd->parsed()) {
    started("generate");
    code = cmd_generate(run, models, dataset, output, split, limit, out);
  } else if (scorer_cmd->parsed()) {
    started("train-scorer");
    code = cmd_train_scorer(run, dataset, output, out);
  } else if (evaluate_cmd->parsed()) {
    started("evaluate");
    code = cmd_evaluate(run, generations, dataset, scorer, output, name, out);
  } else if (judge_cmd->parsed()) {
    started("judge");
    code = cmd_judge(run, gen_a, gen_b, dataset, aspect, output, out);
  } else if (baseline_cmd->parsed()) {
    started("baseline");
    code = cmd_baseline(run, dataset, output, split, limit, out);
  } else if (replay_cmd->parsed()) {
    code = cmd_replay(manifest, out, err);
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const TransportError& e) {
    err << "upstream error: " << e.what() << "\n";
    return kUpstreamError;
  } catch (const ParseError& e) {
    err << "upstream response could not be parsed: " << e.what() << "\n";
    return kUpstreamError;
  } catch (const AuthError& e) {
    err << "authentication failed: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  }
}

}  // namespace udg::cli
