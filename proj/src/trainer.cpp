#include "udg/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "udg/errors.hpp"
#include "udg/tiny_seq2seq.hpp"

namespace udg {

namespace {

std::map<std::string, const PseudoLabel*> label_index(const std::vector<PseudoLabel>& kept_labels) {
  std::map<std::string, const PseudoLabel*> index;
  for (const auto& label : kept_labels) {
    if (!label.kept || label.distractor_text.empty()) continue;
    if (!index.emplace(label.item_id, &label).second) {
      throw std::invalid_argument("item " + label.item_id + " has more than one kept pseudo label");
    }
  }
  return index;
}

std::vector<TaskExample> build_examples(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& kept_labels,
                                        Task task) {
  const auto labels = label_index(kept_labels);
  std::vector<TaskExample> examples;
  for (const auto& item : items) {
    if (item.split != Split::kTrain) {
      throw std::invalid_argument("training examples may only come from train items; got " + item.id);
    }
    auto it = labels.find(item.id);
    if (it == labels.end()) continue;
    const std::string& pseudo = it->second->distractor_text;
    TaskExample ex;
    ex.item_id = item.id;
    ex.task = task;
    ex.source.passage = item.passage;
    ex.source.question = item.question;
    if (task == Task::kAnswer) {
      ex.source.condition = pseudo;
      ex.target_text = item.answer;
    } else {
      ex.source.condition = item.answer;
      ex.target_text = pseudo;
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

// Adam state over the flat parameter vector.
class Adam {
 public:
  explicit Adam(size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<double> m_, v_;
  int64_t t_ = 0;
};

}  // namespace

std::vector<TaskExample> build_answer_examples(const std::vector<RCItem>& items,
                                               const std::vector<PseudoLabel>& kept_labels) {
  return build_examples(items, kept_labels, Task::kAnswer);
}

std::vector<TaskExample> build_distractor_examples(const std::vector<RCItem>& items,
                                                   const std::vector<PseudoLabel>& kept_labels) {
  return build_examples(items, kept_labels, Task::kDistractor);
}

void TrainingSchedule::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (!(max_learning_rate > 0.0)) throw ConfigError("max_learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("warmup_ratio must be in [0, 1]");
}

double learning_rate_factor(int64_t step, int64_t total, double warmup_ratio) {
  const auto warmup = static_cast<int64_t>(std::llround(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  const int64_t decay = total - warmup;
  if (decay <= 0) return 0.0;
  return std::max(0.0, static_cast<double>(total - step) / static_cast<double>(decay));
}

std::vector<Batch> make_batches(const std::vector<TaskExample>& examples, const StudentModel& model, int batch_size,
                                uint64_t seed, int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::seed_seq seq{seed, static_cast<uint64_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    Batch batch;
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    for (size_t k = start; k < end; ++k) {
      const TaskExample& ex = examples[order[k]];
      auto target = encode_target(model.vocabulary(), ex.target_text, model.max_target_tokens());
      std::vector<TokenId> input{ex.decoder_start()};
      input.insert(input.end(), target.begin(), target.end() - 1);
      batch.examples.push_back(&ex);
      batch.decoder_inputs.push_back(std::move(input));
      batch.targets.push_back(std::move(target));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

double evaluate_loss(const StudentModel& model, const std::vector<TaskExample>& examples) {
  double loss = 0.0;
  size_t tokens = 0;
  for (const auto& ex : examples) {
    const auto target = encode_target(model.vocabulary(), ex.target_text, model.max_target_tokens());
    loss += model.accumulate_gradient(ex.source, ex.decoder_start(), target, {});
    tokens += target.size();
  }
  return tokens == 0 ? 0.0 : loss / static_cast<double>(tokens);
}

StageResult train_stage(StudentModel& model, const std::vector<TaskExample>& examples, const StageOptions& options) {
  if (examples.empty()) throw std::invalid_argument("train_stage needs at least one example");
  if (options.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  StageResult result;
  result.initial_loss = evaluate_loss(model, examples);
  const auto per_epoch = static_cast<int64_t>((examples.size() + static_cast<size_t>(options.batch_size) - 1) /
                                              static_cast<size_t>(options.batch_size));
  const int64_t total = per_epoch * options.epochs;
  Adam adam(model.parameters().size());
  std::vector<double> grad(model.parameters().size());
  int64_t step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    double epoch_loss = 0.0;
    size_t epoch_tokens = 0;
    for (const auto& batch : make_batches(examples, model, options.batch_size, options.seed, epoch)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      size_t batch_tokens = 0;
      for (size_t k = 0; k < batch.examples.size(); ++k) {
        const TaskExample& ex = *batch.examples[k];
        batch_loss += model.accumulate_gradient(ex.source, batch.decoder_inputs[k].front(), batch.targets[k], grad);
        batch_tokens += batch.targets[k].size();
      }
      const double inv = 1.0 / static_cast<double>(batch_tokens);
      for (double& g : grad) g *= inv;
      const double lr = options.max_learning_rate * learning_rate_factor(step, total, options.warmup_ratio);
      adam.step(model.parameters(), grad, lr);
      ++step;
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_tokens));
    spdlog::debug("epoch {}: loss {:.5f}", epoch + 1, result.epoch_losses.back());
  }
  result.optimizer_steps = step;
  result.final_loss = evaluate_loss(model, examples);
  return result;
}

std::string_view to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kPseudoOnly: return "pseudo_only";
    case TrainingMode::kAnswerOnly: return "answer_only";
    case TrainingMode::kMixed: return "mixed";
    case TrainingMode::kTwoStage: return "two_stage";
  }
  return "two_stage";
}

TrainingMode parse_training_mode(std::string_view name) {
  if (name == "pseudo_only") return TrainingMode::kPseudoOnly;
  if (name == "answer_only") return TrainingMode::kAnswerOnly;
  if (name == "mixed") return TrainingMode::kMixed;
  if (name == "two_stage") return TrainingMode::kTwoStage;
  throw std::invalid_argument("unknown training mode: " + std::string(name));
}

std::string examples_hash(const std::vector<TaskExample>& examples) {
  io::Json all = io::Json::array();
  for (const auto& ex : examples) {
    all.push_back({ex.item_id, ex.source_text(), ex.target_text, to_string(ex.task)});
  }
  return io::json_hash(all);
}

namespace {

StageOptions stage_options(const TrainingSchedule& s, int epochs, uint64_t seed_offset) {
  return StageOptions{epochs, s.max_learning_rate, s.batch_size, s.warmup_ratio, s.seed + seed_offset};
}

}  // namespace

TrainedPair run_training(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& kept_labels,
                         const StudentModel& initial_model, const TrainingSchedule& schedule, TrainingMode mode) {
  schedule.validate();
  const auto answer_examples = build_answer_examples(items, kept_labels);
  const auto distractor_examples = build_distractor_examples(items, kept_labels);
  if (answer_examples.empty()) throw std::invalid_argument("no item has a kept pseudo label; nothing to train on");

  TrainedPair out;
  out.mode = mode;
  out.answer_example_count = answer_examples.size();
  out.distractor_example_count = distractor_examples.size();
  std::vector<TaskExample> all = answer_examples;
  all.insert(all.end(), distractor_examples.begin(), distractor_examples.end());
  out.data_hash = examples_hash(all);

  auto model = initial_model.clone();
  switch (mode) {
    case TrainingMode::kTwoStage: {
      if (schedule.stage1_epochs > 0) {
        out.stage1 = train_stage(*model, answer_examples, stage_options(schedule, schedule.stage1_epochs, 0));
      }
      out.answer_model = model->clone();
      out.distractor_initial_snapshot = out.answer_model->snapshot();
      auto distractor = load_student(out.distractor_initial_snapshot);
      if (schedule.stage2_epochs > 0) {
        out.stage2 = train_stage(*distractor, distractor_examples, stage_options(schedule, schedule.stage2_epochs, 1));
      } else {
        out.stage2.initial_loss = out.stage2.final_loss = evaluate_loss(*distractor, distractor_examples);
      }
      out.distractor_model = std::move(distractor);
      return out;
    }
    case TrainingMode::kPseudoOnly:
      out.distractor_initial_snapshot = model->snapshot();
      out.stage2 = train_stage(*model, distractor_examples, stage_options(schedule, schedule.stage2_epochs, 1));
      break;
    case TrainingMode::kAnswerOnly:
      out.distractor_initial_snapshot = model->snapshot();
      out.stage1 = train_stage(*model, answer_examples, stage_options(schedule, schedule.stage1_epochs, 0));
      break;
    case TrainingMode::kMixed:
      out.distractor_initial_snapshot = model->snapshot();
      out.stage2 = train_stage(*model, all, stage_options(schedule, schedule.stage2_epochs, 1));
      break;
  }
  out.answer_model = model->clone();
  out.distractor_model = std::move(model);
  return out;
}

TrainedPair run_two_stage(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& kept_labels,
                          const StudentModel& initial_model, const TrainingSchedule& schedule) {
  return run_training(items, kept_labels, initial_model, schedule, TrainingMode::kTwoStage);
}

io::Json to_json(const TrainingSchedule& s) {
  return io::Json{{"stage1_epochs", s.stage1_epochs},   {"stage2_epochs", s.stage2_epochs},
                  {"max_learning_rate", s.max_learning_rate}, {"batch_size", s.batch_size},
                  {"warmup_ratio", s.warmup_ratio},     {"seed", s.seed}};
}

TrainingSchedule schedule_from_json(const io::Json& j, TrainingSchedule d) {
  d.stage1_epochs = j.value("stage1_epochs", d.stage1_epochs);
  d.stage2_epochs = j.value("stage2_epochs", d.stage2_epochs);
  d.max_learning_rate = j.value("max_learning_rate", d.max_learning_rate);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.warmup_ratio = j.value("warmup_ratio", d.warmup_ratio);
  d.seed = j.value("seed", d.seed);
  return d;
}

void save_model_dir(const std::filesystem::path& dir, const StudentModel& model, Task task,
                    const TrainingSchedule& schedule, TrainingMode mode, const std::string& data_hash,
                    const io::Json& extra) {
  std::filesystem::create_directories(dir);
  const std::string bytes = model.snapshot();
  io::write_file(dir / "model.bin", bytes);
  io::Json manifest{{"model_kind", model.kind()},
                    {"task", to_string(task)},
                    {"training_mode", to_string(mode)},
                    {"schedule", to_json(schedule)},
                    {"seed", schedule.seed},
                    {"data_hash", data_hash},
                    {"snapshot_sha256", io::sha256_hex(bytes)},
                    {"optimizer",
                     {{"family", "adam"},
                      {"beta1", 0.9},
                      {"beta2", 0.999},
                      {"epsilon", 1e-8},
                      {"weight_decay", 0.0},
                      {"gradient_clipping", nullptr},
                      {"schedule", "linear warmup then linear decay to zero"}}}};
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::unique_ptr<StudentModel> load_model_dir(const std::filesystem::path& dir) {
  const std::string bytes = io::read_file(dir / "model.bin");
  const auto manifest = load_model_manifest(dir);
  if (manifest.contains("snapshot_sha256") && manifest["snapshot_sha256"] != io::sha256_hex(bytes)) {
    throw ConfigError("model snapshot in " + dir.string() + " does not match its manifest");
  }
  return load_student(bytes);
}

io::Json load_model_manifest(const std::filesystem::path& dir) {
  return io::Json::parse(io::read_file(dir / "manifest.json"));
}

}  // namespace udg
