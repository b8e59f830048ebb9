#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "udg/model.hpp"
#include "udg/tiny_seq2seq.hpp"

namespace udg {
namespace {

TEST(Vocabulary, SpecialsComeFirst) {
  const Vocabulary v;
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(Vocabulary::kEos), "</s>");
  EXPECT_EQ(v.token(Vocabulary::kAnswerTask), "[ANS]");
  EXPECT_EQ(v.token(Vocabulary::kDistractorTask), "[DIS]");
  EXPECT_EQ(v.id("[DIS]"), Vocabulary::kDistractorTask);
}

TEST(Vocabulary, BuildOrdersByFrequencyThenToken) {
  const auto v = Vocabulary::build({"b a c a", "c a d"}, 100);
  EXPECT_EQ(std::vector<std::string>(v.tokens().begin() + 6, v.tokens().end()),
            (std::vector<std::string>{"a", "c", "b", "d"}));
  const auto capped = Vocabulary::build({"b a c a", "c a d"}, 8);
  EXPECT_EQ(capped.size(), 8u);
  const auto frequent = Vocabulary::build({"b a c a", "c a d"}, 100, 2);
  EXPECT_EQ(frequent.size(), 8u);
}

TEST(Vocabulary, EncodeDecodeWithUnknowns) {
  const auto v = test::small_vocabulary({"the", "cat", "sat"});
  const auto ids = v.encode("the dog sat");
  EXPECT_EQ(ids, (std::vector<TokenId>{6, Vocabulary::kUnk, 8}));
  EXPECT_EQ(v.decode(std::vector<TokenId>{Vocabulary::kDistractorTask, 6, 7, Vocabulary::kEos}), "the cat");
}

TEST(Vocabulary, DuplicateTokensRejected) {
  EXPECT_THROW(Vocabulary::from_tokens({"a", "a"}), std::invalid_argument);
}

TEST(Vocabulary, EncodeTargetAppendsEosAndCaps) {
  const auto v = test::small_vocabulary({"a", "b", "c"});
  EXPECT_EQ(encode_target(v, "a b c", 2), (std::vector<TokenId>{6, 7, Vocabulary::kEos}));
  EXPECT_EQ(encode_target(v, "", 5), (std::vector<TokenId>{Vocabulary::kEos}));
}

TEST(Task, TokensAndNames) {
  EXPECT_EQ(task_token(Task::kAnswer), Vocabulary::kAnswerTask);
  EXPECT_EQ(parse_task(to_string(Task::kDistractor)), Task::kDistractor);
  EXPECT_THROW(parse_task("X"), std::invalid_argument);
}

TinyModelConfig small_config() {
  TinyModelConfig c;
  c.embedding_dim = 5;
  c.hidden_dim = 7;
  c.max_target_tokens = 6;
  c.seed = 3;
  return c;
}

const SourceFields kSource{"the cat sat on the mat", "where did the cat sit", "on the mat"};

TEST(TinySeq2Seq, LossMatchesStepwiseLogits) {
  const auto vocab = Vocabulary::build({kSource.passage, kSource.question}, 100);
  TinySeq2Seq model(vocab, small_config());
  const std::vector<TokenId> target{vocab.id("the"), vocab.id("mat"), Vocabulary::kEos};
  double expected = 0;
  std::vector<TokenId> prefix{Vocabulary::kDistractorTask};
  for (TokenId y : target) {
    const auto logits = model.next_token_logits(kSource, prefix);
    double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - m);
    expected -= logits[static_cast<size_t>(y)] - m - std::log(z);
    prefix.push_back(y);
  }
  EXPECT_NEAR(model.accumulate_gradient(kSource, Vocabulary::kDistractorTask, target, {}), expected, 1e-10);
}

TEST(TinySeq2Seq, GradientMatchesFiniteDifferences) {
  const auto vocab = Vocabulary::build({kSource.passage, kSource.question}, 100);
  TinySeq2Seq model(vocab, small_config());
  const std::vector<TokenId> target{vocab.id("on"), vocab.id("the"), vocab.id("mat"), Vocabulary::kEos};
  std::vector<double> grad(model.parameters().size(), 0.0);
  model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, grad);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<size_t> pick(0, grad.size() - 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t k = pick(rng);
    const double saved = model.parameters()[k];
    model.parameters()[k] = saved + h;
    const double up = model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, {});
    model.parameters()[k] = saved - h;
    const double down = model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, {});
    model.parameters()[k] = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_NEAR(grad[k], numeric, 1e-6 + 1e-5 * std::abs(numeric)) << "parameter " << k;
  }
}

TEST(TinySeq2Seq, GradientAccumulates) {
  const auto vocab = Vocabulary::build({kSource.passage}, 100);
  TinySeq2Seq model(vocab, small_config());
  const std::vector<TokenId> target{vocab.id("cat"), Vocabulary::kEos};
  std::vector<double> once(model.parameters().size(), 0.0), twice(once.size(), 0.0);
  model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, once);
  model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, twice);
  model.accumulate_gradient(kSource, Vocabulary::kAnswerTask, target, twice);
  for (size_t k = 0; k < once.size(); ++k) EXPECT_NEAR(twice[k], 2 * once[k], 1e-12);
}

TEST(TinySeq2Seq, TaskTokenChangesPrediction) {
  const auto vocab = Vocabulary::build({kSource.passage}, 100);
  TinySeq2Seq model(vocab, small_config());
  const std::vector<TokenId> ans{Vocabulary::kAnswerTask}, dis{Vocabulary::kDistractorTask};
  EXPECT_NE(model.next_token_logits(kSource, ans), model.next_token_logits(kSource, dis));
}

TEST(TinySeq2Seq, SnapshotRoundTripIsExact) {
  const auto vocab = Vocabulary::build({kSource.passage}, 100);
  TinySeq2Seq model(vocab, small_config());
  const auto snap = model.snapshot();
  const auto copy = TinySeq2Seq::from_snapshot(snap);
  EXPECT_EQ(copy->snapshot(), snap);
  EXPECT_EQ(copy->vocabulary(), vocab);
  EXPECT_EQ(copy->config(), small_config());
  const auto loaded = load_student(snap);
  EXPECT_EQ(loaded->kind(), "tiny_seq2seq");
  const std::vector<TokenId> prefix{Vocabulary::kDistractorTask};
  EXPECT_EQ(loaded->next_token_logits(kSource, prefix), model.next_token_logits(kSource, prefix));

  TinySeq2Seq other(vocab, [] {
    auto c = small_config();
    c.seed = 99;
    return c;
  }());
  EXPECT_NE(other.snapshot(), snap);
  other.restore(snap);
  EXPECT_EQ(other.snapshot(), snap);
}

TEST(TinySeq2Seq, SameSeedSameParameters) {
  const auto vocab = Vocabulary::build({kSource.passage}, 100);
  EXPECT_EQ(TinySeq2Seq(vocab, small_config()).snapshot(), TinySeq2Seq(vocab, small_config()).snapshot());
}

TEST(TinySeq2Seq, CorruptSnapshotsRejected) {
  const auto vocab = Vocabulary::build({kSource.passage}, 100);
  auto snap = TinySeq2Seq(vocab, small_config()).snapshot();
  EXPECT_THROW(TinySeq2Seq::from_snapshot("garbage"), std::invalid_argument);
  EXPECT_THROW(TinySeq2Seq::from_snapshot(snap.substr(0, snap.size() - 3)), std::invalid_argument);
  EXPECT_THROW(load_student("garbage"), std::invalid_argument);
}

TEST(TinySeq2Seq, LongPassageTruncatedButConditionKept) {
  const auto vocab = Vocabulary::build({kSource.passage, "zebra"}, 100);
  auto c = small_config();
  c.max_source_tokens = 12;
  TinySeq2Seq model(vocab, c);
  SourceFields long_source = kSource;
  for (int k = 0; k < 50; ++k) long_source.passage += " the cat";
  long_source.condition = "zebra";
  const auto ids = model.encode_source_ids(long_source);
  EXPECT_LE(ids.size(), 12u);
  EXPECT_EQ(ids.back(), vocab.id("zebra"));
}

}  // namespace
}  // namespace udg
