#include <gtest/gtest.h>

#include "support.hpp"
#include "udg/metrics.hpp"

namespace udg {
namespace {

using metrics::bleu4;

TEST(Bleu, IdentityAndDisjoint) {
  EXPECT_NEAR(bleu4("the cat sat on the mat", "the cat sat on the mat"), 100.0, 1e-9);
  EXPECT_EQ(bleu4("alpha beta gamma delta", "one two three four"), 0.0);
}

TEST(Bleu, MatchesReferenceImplementation) {
  const auto oracle = test::load_json("bleu_oracle.json");
  EXPECT_NEAR(bleu4("a b c d e", "a b c d f"), oracle["pair"]["bleu"].get<double>(), 1e-9);
  EXPECT_NEAR(bleu4("a b c d e", "a b c d f"), 75.21206186, 1e-6);
  for (const auto& row : oracle["random_pairs"]) {
    EXPECT_NEAR(bleu4(row["candidate"].get<std::string>(), row["reference"].get<std::string>()),
                row["bleu"].get<double>(), 1e-9)
        << row.dump();
  }
}

TEST(Bleu, IsNotSymmetric) { EXPECT_NE(bleu4("a b c", "a b c d e f"), bleu4("a b c d e f", "a b c")); }

TEST(Bleu, CaseSensitiveAndPunctuationSplit) {
  EXPECT_EQ(bleu4("Paris", "paris"), 0.0);
  EXPECT_NEAR(bleu4("in Paris.", "in Paris ."), 100.0, 1e-9);
}

TEST(Bleu, EmptyInputRejected) {
  EXPECT_THROW(bleu4("", "a"), std::invalid_argument);
  EXPECT_THROW(bleu4("a", "  "), std::invalid_argument);
}

TEST(RougeL, HandComputed) {
  EXPECT_NEAR(metrics::rouge_l("a b c d", {"a x c d"}), 75.0, 1e-12);
  EXPECT_NEAR(metrics::rouge_l("a b c", {"a b c"}), 100.0, 1e-12);
  EXPECT_EQ(metrics::rouge_l("a b", {"c d"}), 0.0);
  EXPECT_NEAR(metrics::rouge_l("a b c d", {"c d", "a x c d"}), 75.0, 1e-12);
}

TEST(Distinct, HandEnumerated) {
  EXPECT_NEAR(metrics::distinct_n({"a b", "a c"}, 1), 75.0, 1e-12);
  EXPECT_NEAR(metrics::distinct_n({"a b", "a b"}, 1), 50.0, 1e-12);
  EXPECT_NEAR(metrics::distinct_n({"a b c d"}, 1), 100.0, 1e-12);
  EXPECT_NEAR(metrics::distinct_n({"a b", "a b"}, 2), 50.0, 1e-12);
  EXPECT_EQ(metrics::distinct_n({"", "a"}, 2), 0.0);
  EXPECT_EQ(metrics::distinct_n({"a b", "c a"}, 1), metrics::distinct_n({"c a", "a b"}, 1));
  EXPECT_THROW(metrics::distinct_n({"a"}, 0), std::invalid_argument);
}

TEST(Jaccard, LowercasedTokenSets) {
  EXPECT_NEAR(metrics::jaccard_similarity("a b c", "a b c d"), 0.75, 1e-12);
  EXPECT_NEAR(metrics::jaccard_similarity("A B", "b a a"), 1.0, 1e-12);
  EXPECT_EQ(metrics::jaccard_similarity("x y", "z"), 0.0);
}

}  // namespace
}  // namespace udg
