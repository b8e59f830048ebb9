#include <gtest/gtest.h>

#include "support.hpp"
#include "udg/io.hpp"
#include "udg/text.hpp"

namespace udg {
namespace {

TEST(Text, NormalizeComposesAndCollapsesWhitespace) {
  // "e" + combining acute becomes the precomposed character.
  EXPECT_EQ(text::normalize("  caf\x65\xcc\x81 \t au\n lait "), "caf\xc3\xa9 au lait");
  EXPECT_EQ(text::normalize("Keep Case"), "Keep Case");
  EXPECT_EQ(text::normalize(" \n "), "");
}

TEST(Text, TokenizeSplitsPunctuation) {
  EXPECT_EQ(text::tokenize("Hello, world! It's fine"), (std::vector<std::string>{"Hello", ",", "world", "!", "It",
                                                                                  "'", "s", "fine"}));
  EXPECT_TRUE(text::tokenize("   ").empty());
}

TEST(Text, LowercaseIsUnicodeAware) { EXPECT_EQ(text::lowercase("\xc3\x89T\xc3\x89 Tom"), "\xc3\xa9t\xc3\xa9 tom"); }

TEST(Text, Fnv1aKnownValues) {
  EXPECT_EQ(text::fnv1a(""), 14695981039346656037ULL);
  EXPECT_EQ(text::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Io, Sha256KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, JsonlRoundTripAndAppend) {
  const auto dir = test::scratch_dir("jsonl");
  const auto path = dir / "records.jsonl";
  io::write_jsonl(path, {io::Json{{"a", 1}}, io::Json{{"b", "x\ny"}}});
  io::append_jsonl(path, io::Json{{"c", nullptr}});
  const auto back = io::read_jsonl(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1]["b"], "x\ny");
  EXPECT_TRUE(back[2]["c"].is_null());
}

TEST(Io, JsonHashIgnoresKeyOrder) {
  EXPECT_EQ(io::json_hash(io::Json::parse(R"({"a":1,"b":2})")), io::json_hash(io::Json::parse(R"({"b":2,"a":1})")));
}

}  // namespace
}  // namespace udg
