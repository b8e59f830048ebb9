#include <gtest/gtest.h>

#include "support.hpp"
#include "udg/errors.hpp"
#include "udg/prompt.hpp"

namespace udg {
namespace {

RCItem pqa() {
  RCItem item;
  item.id = "x";
  item.passage = "P";
  item.question = "Q";
  item.answer = "A";
  return item;
}

TEST(Prompt, RenderSubstitutesVerbatim) {
  const auto rendered = render_prompt(pqa(), builtin_template("pseudo_gpt"));
  EXPECT_NE(rendered.user.find("<document> P </document>"), std::string::npos);
  EXPECT_NE(rendered.user.find("<question> Q </question>"), std::string::npos);
  EXPECT_NE(rendered.user.find("<answer> A </answer>"), std::string::npos);
  EXPECT_EQ(rendered.system, builtin_template("pseudo_gpt").system_text);
  EXPECT_EQ(rendered, render_prompt(pqa(), builtin_template("pseudo_gpt")));
}

TEST(Prompt, PlaceholderValuesAreNotReexpanded) {
  RCItem item = pqa();
  item.passage = "{question}";
  const auto rendered = render_prompt(item, builtin_template("pseudo_gpt"));
  EXPECT_NE(rendered.user.find("<document> {question} </document>"), std::string::npos);
}

TEST(Prompt, MissingPlaceholderIsTemplateError) {
  PromptTemplate t = builtin_template("pseudo_gpt");
  const auto pos = t.user_text.find("{answer}");
  t.user_text.erase(pos, 8);
  EXPECT_THROW(validate(t), TemplateError);
  EXPECT_THROW(render_prompt(pqa(), t), TemplateError);
  PromptTemplate twice = builtin_template("pseudo_gpt");
  twice.user_text += " {answer}";
  EXPECT_THROW(validate(twice), TemplateError);
}

TEST(Prompt, EmptyItemFieldRejected) {
  RCItem item = pqa();
  item.question.clear();
  EXPECT_THROW(render_prompt(item, builtin_template("pseudo_gpt")), std::invalid_argument);
}

TEST(Prompt, DemonstrationsPrecedeTheQuery) {
  const auto rendered = render_prompt(pqa(), builtin_template("pseudo_gpt"), {"DEMO ONE", "DEMO TWO"});
  const auto one = rendered.user.find("DEMO ONE");
  const auto two = rendered.user.find("DEMO TWO");
  const auto doc = rendered.user.find("<document> P");
  ASSERT_NE(one, std::string::npos);
  EXPECT_LT(one, two);
  EXPECT_LT(two, doc);
  const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f"};
  EXPECT_EQ(select_demonstrations(pool, 3, 9), select_demonstrations(pool, 3, 9));
  EXPECT_EQ(select_demonstrations(pool, 3, 9).size(), 3u);
}

TEST(ParseResultTags, Examples) {
  EXPECT_EQ(parse_result_tags("<result>foo</result>", 1), std::vector<std::string>{"foo"});
  EXPECT_EQ(parse_result_tags("<result>a; b; c</result>", 3), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(parse_result_tags("x <result> one </result>\n<result>two</result>", 3),
            (std::vector<std::string>{"one", "two"}));
  EXPECT_THROW(parse_result_tags("no tags here", 1), ParseError);
  try {
    parse_result_tags("no tags here", 1);
  } catch (const ParseError& e) {
    EXPECT_EQ(e.raw_response(), "no tags here");
  }
}

TEST(ParseResultTags, RoundTripsStubPayloads) {
  for (const std::vector<std::string>& payload :
       {std::vector<std::string>{"the red house"}, std::vector<std::string>{"x", "y y", "z"}}) {
    std::string response;
    for (const auto& p : payload) response += "<result>" + p + "</result>\n";
    EXPECT_EQ(parse_result_tags(response, static_cast<int>(payload.size())), payload);
  }
}

TEST(Templates, ShippedFilesEqualBuiltins) {
  for (const auto& id : builtin_template_ids()) {
    const auto path = std::filesystem::path(UDG_TEMPLATE_DIR) / (id + ".txt");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(load_template(path), builtin_template(id)) << id;
    EXPECT_EQ(resolve_template(path.string()), builtin_template(id));
  }
  EXPECT_EQ(parse_template(serialize_template(builtin_template("judge"))), builtin_template("judge"));
}

TEST(Templates, TranscribedPromptText) {
  EXPECT_NE(builtin_template("pseudo_gpt").system_text.find("begin with '<result>' and end with '</result>'"),
            std::string::npos);
  EXPECT_NE(builtin_template("zeroshot_llama").user_text.find("split by ';'"), std::string::npos);
  EXPECT_EQ(builtin_template("zeroshot_gpt").expected_result_count, 3);
  EXPECT_NE(builtin_template("judge").user_text.find("return 'Win'"), std::string::npos);
  EXPECT_THROW(builtin_template("nope"), TemplateError);
}

}  // namespace
}  // namespace udg
