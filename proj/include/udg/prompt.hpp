#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "udg/corpus.hpp"

namespace udg {

// A chat prompt with named `{placeholder}` slots. Every name listed in
// `placeholders` must occur exactly once across system and user text.
struct PromptTemplate {
  std::string template_id;
  std::string system_text;
  std::string user_text;
  int expected_result_count = 1;
  std::vector<std::string> placeholders;

  bool operator==(const PromptTemplate&) const = default;
};

struct RenderedPrompt {
  std::string system;
  std::string user;

  bool operator==(const RenderedPrompt&) const = default;
};

// Throws TemplateError when a declared placeholder is missing or repeated.
void validate(const PromptTemplate& tmpl);

// Single left-to-right pass: substituted values are never rescanned, so a
// passage that happens to contain "{answer}" is copied verbatim.
RenderedPrompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values);

// Fills {passage}, {question} and {answer}. Demonstration blocks, when given,
// are prepended verbatim to the user text, separated by blank lines.
RenderedPrompt render_prompt(const RCItem& item, const PromptTemplate& tmpl,
                             const std::vector<std::string>& demonstrations = {});

// Formats a labelled example as a few-shot block in the same tag layout the
// templates use.
std::string format_demonstration(const RCItem& item, std::string_view distractor);

// Seeded choice of `count` blocks from `pool` (without replacement).
std::vector<std::string> select_demonstrations(const std::vector<std::string>& pool, size_t count, uint64_t seed);

// Contents of successive <result>...</result> pairs, trimmed, empty ones
// skipped. When three results are expected and a single pair holds a
// ';'-separated list, the list is split. Throws ParseError when nothing can
// be extracted.
std::vector<std::string> parse_result_tags(std::string_view response, int expected_count);

// Plain-text template file:
//   template_id: <id>
//   expected_results: <n>
//   placeholders: <name> <name> ...
//   --- system
//   <text>
//   --- user
//   <text>
PromptTemplate parse_template(std::string_view contents);
PromptTemplate load_template(const std::filesystem::path& path);
std::string serialize_template(const PromptTemplate& tmpl);

// Shipped defaults: pseudo_gpt, pseudo_llama, zeroshot_gpt, zeroshot_llama,
// judge, judge_requirement_quality, judge_requirement_distracting.
const PromptTemplate& builtin_template(std::string_view template_id);
std::vector<std::string> builtin_template_ids();

// A builtin id or a path to a template file.
PromptTemplate resolve_template(const std::string& id_or_path);

}  // namespace udg
