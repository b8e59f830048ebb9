#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "udg/errors.hpp"
#include "udg/trainer.hpp"

namespace udg {
namespace {

RCItem make_item(const std::string& id, const std::string& answer) {
  RCItem item;
  item.id = id;
  item.passage = "passage of " + id;
  item.question = "question of " + id;
  item.answer = answer;
  item.reference_distractors = {"reference one", "reference two"};
  return item;
}

PseudoLabel kept(const std::string& id, const std::string& text) {
  return PseudoLabel{id, text, "", LabelStatus::kOk, 0.0, true};
}

TEST(Examples, DualTasksAreSymmetric) {
  const std::vector<RCItem> items{make_item("a", "red"), make_item("b", "blue"), make_item("c", "green")};
  const std::vector<PseudoLabel> labels{kept("a", "pink"), kept("c", "grey")};
  const auto ans = build_answer_examples(items, labels);
  const auto dis = build_distractor_examples(items, labels);
  ASSERT_EQ(ans.size(), 2u);
  ASSERT_EQ(dis.size(), 2u);
  for (size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(ans[k].item_id, dis[k].item_id);
    EXPECT_EQ(ans[k].source.passage, dis[k].source.passage);
    EXPECT_EQ(ans[k].source.question, dis[k].source.question);
    EXPECT_EQ(ans[k].source.condition, dis[k].target_text);
    EXPECT_EQ(ans[k].target_text, dis[k].source.condition);
    EXPECT_EQ(ans[k].decoder_start(), Vocabulary::kAnswerTask);
    EXPECT_EQ(dis[k].decoder_start(), Vocabulary::kDistractorTask);
  }
  EXPECT_EQ(ans[1].source.condition, "grey");
  EXPECT_EQ(ans[1].target_text, "green");
  EXPECT_EQ(dis[0].source_text(), "passage of a <sep> question of a <sep> red");
}

TEST(Examples, ReferenceDistractorsNeverUsed) {
  const std::vector<RCItem> items{make_item("a", "red")};
  for (const auto& ex : build_answer_examples(items, {kept("a", "pink")})) {
    EXPECT_EQ(ex.source_text().find("reference"), std::string::npos);
    EXPECT_EQ(ex.target_text.find("reference"), std::string::npos);
  }
}

TEST(Examples, UnkeptLabelsIgnored) {
  PseudoLabel dropped = kept("a", "red");
  dropped.kept = false;
  EXPECT_TRUE(build_answer_examples({make_item("a", "red")}, {dropped}).empty());
}

TEST(Examples, TestItemsAndDuplicateLabelsRejected) {
  auto test_item = make_item("t", "x");
  test_item.split = Split::kTest;
  EXPECT_THROW(build_answer_examples({test_item}, {}), std::invalid_argument);
  EXPECT_THROW(build_distractor_examples({make_item("a", "x")}, {kept("a", "p"), kept("a", "q")}),
               std::invalid_argument);
}

TEST(Schedule, DefaultsAndValidation) {
  const TrainingSchedule s;
  EXPECT_EQ(s.stage1_epochs, 5);
  EXPECT_EQ(s.stage2_epochs, 10);
  EXPECT_DOUBLE_EQ(s.max_learning_rate, 1e-5);
  EXPECT_EQ(s.batch_size, 48);
  EXPECT_DOUBLE_EQ(s.warmup_ratio, 0.1);
  EXPECT_NO_THROW(s.validate());
  TrainingSchedule bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.max_learning_rate = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.warmup_ratio = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(schedule_from_json(to_json(s)).batch_size, 48);
}

TEST(Schedule, WarmupThenLinearDecay) {
  // 10 steps, 2 of warmup.
  const std::vector<double> expected{0.5, 1.0, 1.0, 0.875, 0.75, 0.625, 0.5, 0.375, 0.25, 0.125};
  for (int64_t step = 0; step < 10; ++step) {
    EXPECT_DOUBLE_EQ(learning_rate_factor(step, 10, 0.2), expected[static_cast<size_t>(step)]) << step;
  }
  EXPECT_DOUBLE_EQ(learning_rate_factor(0, 4, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_factor(3, 4, 0.0), 0.25);
}

struct ToyData {
  std::vector<RCItem> train;
  std::vector<PseudoLabel> labels;
  Vocabulary vocab;
};

const ToyData& toy() {
  static const ToyData data = [] {
    ToyData d;
    d.train = filter_split(test::toy_items(), Split::kTrain);
    d.labels = test::toy_kept_labels(d.train);
    d.vocab = test::toy_vocabulary(d.train, d.labels);
    return d;
  }();
  return data;
}

TinyModelConfig toy_config() {
  TinyModelConfig c;
  c.embedding_dim = 16;
  c.hidden_dim = 24;
  c.max_target_tokens = 12;
  return c;
}

TEST(Batches, DecoderInputsStartWithTaskToken) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  const auto ans = build_answer_examples(d.train, d.labels);
  const auto dis = build_distractor_examples(d.train, d.labels);
  std::vector<TaskExample> all = ans;
  all.insert(all.end(), dis.begin(), dis.end());
  const auto batches = make_batches(all, model, 7, 42, 0);
  size_t seen = 0;
  std::set<const TaskExample*> unique;
  for (const auto& b : batches) {
    EXPECT_LE(b.examples.size(), 7u);
    for (size_t k = 0; k < b.examples.size(); ++k) {
      EXPECT_EQ(b.decoder_inputs[k].front(), b.examples[k]->decoder_start());
      EXPECT_EQ(b.targets[k].back(), Vocabulary::kEos);
      EXPECT_EQ(b.decoder_inputs[k].size(), b.targets[k].size());
      EXPECT_TRUE(std::equal(b.targets[k].begin(), b.targets[k].end() - 1, b.decoder_inputs[k].begin() + 1));
      unique.insert(b.examples[k]);
      ++seen;
    }
  }
  EXPECT_EQ(seen, all.size());
  EXPECT_EQ(unique.size(), all.size());
}

TEST(Batches, ShuffleDependsOnSeedAndEpoch) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  const auto ex = build_answer_examples(d.train, d.labels);
  const auto order = [&](uint64_t seed, int epoch) {
    std::vector<std::string> ids;
    for (const auto& b : make_batches(ex, model, 4, seed, epoch))
      for (const auto* e : b.examples) ids.push_back(e->item_id);
    return ids;
  };
  EXPECT_EQ(order(1, 0), order(1, 0));
  EXPECT_NE(order(1, 0), order(1, 1));
  EXPECT_NE(order(1, 0), order(2, 0));
}

TEST(TrainStage, FirstAdamStepMovesEachWeightByLearningRate) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  auto ex = build_distractor_examples(d.train, d.labels);
  ex.resize(3);
  std::vector<double> grad(model.parameters().size(), 0.0);
  size_t tokens = 0;
  for (const auto& e : ex) {
    const auto target = encode_target(d.vocab, e.target_text, model.max_target_tokens());
    model.accumulate_gradient(e.source, e.decoder_start(), target, grad);
    tokens += target.size();
  }
  const std::vector<double> before(model.parameters().begin(), model.parameters().end());
  const double lr = 1e-3;
  const auto r = train_stage(model, ex, StageOptions{1, lr, 8, 0.0, 42});
  EXPECT_EQ(r.optimizer_steps, 1);
  for (size_t k = 0; k < before.size(); ++k) {
    const double g = grad[k] / static_cast<double>(tokens);
    const double expected = before[k] - lr * g / (std::abs(g) + 1e-8);
    ASSERT_NEAR(model.parameters()[k], expected, 1e-12) << k;
  }
}

TEST(TrainStage, ReportsLossesAndSteps) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  const auto ex = build_answer_examples(d.train, d.labels);
  const double before = evaluate_loss(model, ex);
  const auto r = train_stage(model, ex, StageOptions{3, 1e-2, 16, 0.1, 1});
  EXPECT_DOUBLE_EQ(r.initial_loss, before);
  EXPECT_EQ(r.epoch_losses.size(), 3u);
  EXPECT_EQ(r.optimizer_steps, 3 * static_cast<int64_t>((ex.size() + 15) / 16));
  EXPECT_DOUBLE_EQ(r.final_loss, evaluate_loss(model, ex));
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(TrainStage, OverfitsSmallSet) {
  const auto& d = toy();
  auto config = toy_config();
  config.embedding_dim = 32;
  config.hidden_dim = 48;
  TinySeq2Seq model(d.vocab, config);
  auto ex = build_distractor_examples(d.train, d.labels);
  ex.resize(8);
  const auto r = train_stage(model, ex, StageOptions{60, 2e-2, 4, 0.1, 3});
  EXPECT_LT(r.final_loss, 0.1 * r.initial_loss);
}

TrainingSchedule quick_schedule() {
  TrainingSchedule s;
  s.stage1_epochs = 2;
  s.stage2_epochs = 2;
  s.max_learning_rate = 1e-2;
  s.batch_size = 16;
  return s;
}

TEST(TwoStage, DistractorModelStartsFromAnswerModel) {
  const auto& d = toy();
  TinySeq2Seq initial(d.vocab, toy_config());
  const auto pair = run_two_stage(d.train, d.labels, initial, quick_schedule());
  EXPECT_EQ(pair.distractor_initial_snapshot, pair.answer_model->snapshot());
  EXPECT_NE(pair.answer_model->snapshot(), initial.snapshot());
  EXPECT_NE(pair.distractor_model->snapshot(), pair.answer_model->snapshot());
  EXPECT_EQ(pair.answer_example_count, d.labels.size());
  EXPECT_EQ(pair.distractor_example_count, d.labels.size());
  EXPECT_EQ(pair.stage1.epoch_losses.size(), 2u);
  EXPECT_EQ(pair.stage2.epoch_losses.size(), 2u);
}

TEST(TwoStage, ZeroSecondStageLeavesStartingPointIntact) {
  const auto& d = toy();
  TinySeq2Seq initial(d.vocab, toy_config());
  auto s = quick_schedule();
  s.stage2_epochs = 0;
  const auto pair = run_two_stage(d.train, d.labels, initial, s);
  EXPECT_EQ(pair.distractor_model->snapshot(), pair.answer_model->snapshot());
  EXPECT_EQ(pair.stage2.optimizer_steps, 0);
}

TEST(TwoStage, DeterministicForFixedSeed) {
  const auto& d = toy();
  TinySeq2Seq initial(d.vocab, toy_config());
  const auto a = run_two_stage(d.train, d.labels, initial, quick_schedule());
  const auto b = run_two_stage(d.train, d.labels, initial, quick_schedule());
  EXPECT_EQ(a.distractor_model->snapshot(), b.distractor_model->snapshot());
  EXPECT_EQ(a.data_hash, b.data_hash);
}

TEST(TrainingModes, EachModeTrainsWhatItSays) {
  const auto& d = toy();
  TinySeq2Seq initial(d.vocab, toy_config());
  std::set<std::string> snapshots;
  for (auto mode : {TrainingMode::kPseudoOnly, TrainingMode::kAnswerOnly, TrainingMode::kMixed,
                    TrainingMode::kTwoStage}) {
    const auto pair = run_training(d.train, d.labels, initial, quick_schedule(), mode);
    EXPECT_EQ(pair.mode, mode);
    EXPECT_EQ(parse_training_mode(to_string(mode)), mode);
    snapshots.insert(pair.distractor_model->snapshot());
    if (mode == TrainingMode::kAnswerOnly) EXPECT_TRUE(pair.stage2.epoch_losses.empty());
    if (mode == TrainingMode::kPseudoOnly) EXPECT_TRUE(pair.stage1.epoch_losses.empty());
  }
  EXPECT_EQ(snapshots.size(), 4u);
  EXPECT_THROW(parse_training_mode("both"), std::invalid_argument);
}

TEST(TrainingModes, NoLabelsIsAnError) {
  const auto& d = toy();
  TinySeq2Seq initial(d.vocab, toy_config());
  EXPECT_THROW(run_training(d.train, {}, initial, quick_schedule()), std::invalid_argument);
}

TEST(ModelDir, SaveLoadRoundTrip) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  const auto dir = test::scratch_dir("model_dir");
  save_model_dir(dir, model, Task::kDistractor, quick_schedule(), TrainingMode::kTwoStage, "abc");
  const auto loaded = load_model_dir(dir);
  EXPECT_EQ(loaded->snapshot(), model.snapshot());
  const auto manifest = load_model_manifest(dir);
  EXPECT_EQ(manifest["task"], "DIS");
  EXPECT_EQ(manifest["training_mode"], "two_stage");
  EXPECT_EQ(manifest["data_hash"], "abc");
  EXPECT_EQ(manifest["schedule"]["batch_size"], 16);
}

TEST(ModelDir, TamperedSnapshotRejected) {
  const auto& d = toy();
  TinySeq2Seq model(d.vocab, toy_config());
  const auto dir = test::scratch_dir("model_dir_tamper");
  save_model_dir(dir, model, Task::kAnswer, quick_schedule(), TrainingMode::kTwoStage, "abc");
  auto bytes = io::read_file(dir / "model.bin");
  bytes[bytes.size() - 1] ^= 1;
  io::write_file(dir / "model.bin", bytes);
  EXPECT_ANY_THROW(load_model_dir(dir));
}

}  // namespace
}  // namespace udg
