#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "udg/annotator.hpp"
#include "udg/corpus.hpp"
#include "udg/io.hpp"
#include "udg/model.hpp"

namespace udg {

// A (source, target, task) training triple for one of the dual tasks.
struct TaskExample {
  std::string item_id;
  SourceFields source;
  std::string target_text;
  Task task = Task::kDistractor;

  std::string source_text() const { return udg::source_text(source); }
  TokenId decoder_start() const { return task_token(task); }

  bool operator==(const TaskExample&) const = default;
};

// (p, q, d') -> a, decoded after [ANS]. Items without a kept label are
// skipped. Throws std::invalid_argument for test-split items or when an item
// has more than one kept label.
std::vector<TaskExample> build_answer_examples(const std::vector<RCItem>& items,
                                               const std::vector<PseudoLabel>& kept_labels);

// (p, q, a) -> d', decoded after [DIS]. Same preconditions.
std::vector<TaskExample> build_distractor_examples(const std::vector<RCItem>& items,
                                                   const std::vector<PseudoLabel>& kept_labels);

struct TrainingSchedule {
  int stage1_epochs = 5;
  int stage2_epochs = 10;
  double max_learning_rate = 1e-5;
  int batch_size = 48;
  double warmup_ratio = 0.1;
  uint64_t seed = 42;

  void validate() const;
};

struct StageOptions {
  int epochs = 1;
  double max_learning_rate = 1e-5;
  int batch_size = 48;
  double warmup_ratio = 0.1;
  uint64_t seed = 42;
};

// Learning-rate multiplier for 0-based optimizer step `step` of `total`:
// linear warmup over the first round(warmup_ratio * total) steps, then
// linear decay to zero.
double learning_rate_factor(int64_t step, int64_t total, double warmup_ratio);

// One optimizer batch: decoder inputs start with the task token of each
// example.
struct Batch {
  std::vector<const TaskExample*> examples;
  std::vector<std::vector<TokenId>> decoder_inputs;  // [task, target...] without final eos
  std::vector<std::vector<TokenId>> targets;         // target ids ending with eos
};

// Deterministic epoch batching: examples shuffled with (seed, epoch).
std::vector<Batch> make_batches(const std::vector<TaskExample>& examples, const StudentModel& model, int batch_size,
                                uint64_t seed, int epoch);

struct StageResult {
  double initial_loss = 0.0;        // mean token CE before the first update
  std::vector<double> epoch_losses;  // running mean token CE of each epoch
  double final_loss = 0.0;          // mean token CE after the last update
  int64_t optimizer_steps = 0;
};

// Mean token-level cross entropy of `examples` under `model`.
double evaluate_loss(const StudentModel& model, const std::vector<TaskExample>& examples);

// Adam (beta 0.9/0.999, eps 1e-8, no weight decay, no clipping) with the
// warmup/decay schedule above. Loss per batch is the summed token CE divided
// by the number of target tokens in the batch; padding never contributes.
StageResult train_stage(StudentModel& model, const std::vector<TaskExample>& examples, const StageOptions& options);

enum class TrainingMode { kPseudoOnly, kAnswerOnly, kMixed, kTwoStage };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view name);

struct TrainedPair {
  std::unique_ptr<StudentModel> answer_model;      // M_a
  std::unique_ptr<StudentModel> distractor_model;  // M_d
  std::string distractor_initial_snapshot;         // parameters M_d started from
  StageResult stage1;
  StageResult stage2;
  TrainingMode mode = TrainingMode::kTwoStage;
  size_t answer_example_count = 0;
  size_t distractor_example_count = 0;
  std::string data_hash;
};

// two_stage: M_a trains on ANS examples for stage1_epochs; M_d starts from
// an exact snapshot of the finished M_a and trains on DIS examples for
// stage2_epochs.
// pseudo_only: a fresh copy trains on DIS examples for stage2_epochs.
// answer_only: a fresh copy trains on ANS examples for stage1_epochs.
// mixed: a fresh copy trains on the shuffled union for stage2_epochs.
// Single-model modes return that model as both M_a and M_d.
TrainedPair run_training(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& kept_labels,
                         const StudentModel& initial_model, const TrainingSchedule& schedule,
                         TrainingMode mode = TrainingMode::kTwoStage);

TrainedPair run_two_stage(const std::vector<RCItem>& items, const std::vector<PseudoLabel>& kept_labels,
                          const StudentModel& initial_model, const TrainingSchedule& schedule);

std::string examples_hash(const std::vector<TaskExample>& examples);

// Model snapshot directory: model.bin plus manifest.json recording task,
// schedule, data hash, seed and the optimizer choices.
void save_model_dir(const std::filesystem::path& dir, const StudentModel& model, Task task,
                    const TrainingSchedule& schedule, TrainingMode mode, const std::string& data_hash,
                    const io::Json& extra = io::Json::object());
std::unique_ptr<StudentModel> load_model_dir(const std::filesystem::path& dir);
io::Json load_model_manifest(const std::filesystem::path& dir);

io::Json to_json(const TrainingSchedule& schedule);
TrainingSchedule schedule_from_json(const io::Json& j, TrainingSchedule defaults = {});

}  // namespace udg
