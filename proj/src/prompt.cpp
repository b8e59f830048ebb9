#include "udg/prompt.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "udg/errors.hpp"
#include "udg/io.hpp"
#include "udg/text.hpp"

namespace udg {

namespace {

constexpr std::string_view kOpenTag = "<result>";
constexpr std::string_view kCloseTag = "</result>";

size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  size_t count = 0;
  for (size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string substitute(std::string_view source, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(source.size());
  size_t i = 0;
  while (i < source.size()) {
    if (source[i] == '{') {
      const size_t close = source.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(source.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(source[i]);
    ++i;
  }
  return out;
}

PromptTemplate make(std::string id, int expected, std::vector<std::string> placeholders, std::string system,
                    std::string user) {
  PromptTemplate t{std::move(id), std::move(system), std::move(user), expected, std::move(placeholders)};
  validate(t);
  return t;
}

const std::vector<PromptTemplate>& builtins() {
  static const std::vector<PromptTemplate> templates = [] {
    const std::vector<std::string> item_slots{"passage", "question", "answer"};
    std::vector<PromptTemplate> t;
    t.push_back(make(
        "pseudo_gpt", 1, item_slots,
        "You are a helpful AI educational assistant to generate distractors (wrong answers) to help reading "
        "comprehension. Please generate one distractor with following requirement: 1. The generated distractor is "
        "a wrong answer to the input question according to the given document. 2. Return the generated result "
        "directly in one line that begin with '<result>' and end with '</result>'.",
        "Now I will provide you with a reading comprehension document, a question and an answer.\n"
        "<document> {passage} </document>\n"
        "<question> {question} </question>\n"
        "<answer> {answer} </answer>"));
    t.push_back(make(
        "pseudo_llama", 1, item_slots, "",
        "You are a helpful AI educational assistant to generate distractors (wrong answers) for reading "
        "comprehension. You are required to generate one distractor with the given document, question and answer. "
        "There are some requirements for you: 1. The generated result should begin with '<result>' and end with "
        "'</result>'. 2. If the input question is an incomplete sentence, the generated result should complete "
        "the syntax of the question. 3. You should not return any explanations except the distractors. There is "
        "the document, question and answer:\n"
        "<document> {passage} </document>\n"
        "<question> {question} </question>\n"
        "<answer> {answer} </answer>\n"
        "<result>"));
    t.push_back(make(
        "zeroshot_gpt", 3, item_slots,
        "You are a helpful AI educational assistant to generate distractors (wrong answers) to help reading "
        "comprehension. Please generate three distractors with following requirement: 1. The generated "
        "distractors are a wrong answer to the input question according to the given document. 2. The generated "
        "results should be returned in three lines and each result should begin with '<result>' and end with "
        "'</result>'.",
        "Now I will provide you with a reading comprehension document, a question and an answer.\n"
        "<document> {passage} </document>\n"
        "<question> {question} </question>\n"
        "<answer> {answer} </answer>"));
    t.push_back(make(
        "zeroshot_llama", 3, item_slots, "",
        "You are a helpful AI educational assistant to generate distractors (wrong answers) for reading "
        "comprehension. You are required to generate three distractors with the given document, question and "
        "answer. Now I will provide you with a document.\n"
        "<document> {passage} </document>\n"
        "There are some requirements for you: 1. The generated result should begin with '<result>' and end with "
        "'</result>'. Between <result> and </result>, return three results split by ';'. 2. If the input question "
        "is an incomplete sentence, the generated result should complete the syntax of the question. 3. You "
        "should not return any explanations except the distractors. Then I will give you a question-answer pair "
        "about the input document.\n"
        "<question> {question} </question>\n"
        "<answer> {answer} </answer>\n"
        "The three distractors can be: <result>"));
    t.push_back(make(
        "judge", 1, {"passage", "question", "answer", "reference", "requirement", "candidate_1", "candidate_2"},
        "You are a helpful AI educational assistant that can evaluate distractors (wrong answers) and find the "
        "better one from two candidates.",
        "Now I will provide you with a reading comprehension document, a question, an answer and a reference "
        "distractor.\n"
        "<document> {passage} </document>\n"
        "<question> {question} </question>\n"
        "<answer> {answer} </answer>\n"
        "<reference> {reference} </reference>\n"
        "Then I will give you 2 distractor candidates and you should judge which one is a better result. The "
        "detailed comparison requirements are as follow:\n"
        "************\n"
        "{requirement}\n"
        "************\n"
        "I will show you two candidate distractors. If the first candidate is obviously greater than the second "
        "candidate, return 'Win'; If the first candidate is obviously worse than the second candidate, return "
        "'Lose'; If you think there are not obvious gap between these two candidates, return 'Tie'. Do not return "
        "any explanations about your result.\n"
        "The candidates are: 1. {candidate_1};  2. {candidate_2}."));
    t.push_back(make("judge_requirement_quality", 0, {}, "",
                     "1. You should compare the candidates according to their quality.\n"
                     "2. If the candidate is consist of fluent sentences without any grammar errors, the candidate "
                     "has high quality.\n"
                     "3. If there are just some small errors like tense error and voice error, the candidate has "
                     "medium quality.\n"
                     "4. If there are obvious syntactic or grammatical errors, the candidate has low quality."));
    t.push_back(make("judge_requirement_distracting", 0, {}, "",
                     "1. You should compare the candidates according to their distracting level.\n"
                     "2. If the candidate is correct to the input question, it has low distracting level.\n"
                     "3. If the candidate is wrong to the input question, it has high distracting level.\n"
                     "4. The given answer has low distracting level and the given reference has high distracting "
                     "level. These two sentences can serve as the reference for your comparison."));
    return t;
  }();
  return templates;
}

}  // namespace

void validate(const PromptTemplate& tmpl) {
  for (const auto& name : tmpl.placeholders) {
    const std::string slot = "{" + name + "}";
    const size_t n = count_occurrences(tmpl.system_text, slot) + count_occurrences(tmpl.user_text, slot);
    if (n == 0) throw TemplateError("template '" + tmpl.template_id + "' is missing placeholder " + slot);
    if (n > 1) throw TemplateError("template '" + tmpl.template_id + "' repeats placeholder " + slot);
  }
}

RenderedPrompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values) {
  validate(tmpl);
  std::map<std::string, std::string> declared;
  for (const auto& name : tmpl.placeholders) {
    auto it = values.find(name);
    if (it == values.end()) throw TemplateError("no value for placeholder {" + name + "}");
    declared.emplace(name, it->second);
  }
  return {substitute(tmpl.system_text, declared), substitute(tmpl.user_text, declared)};
}

RenderedPrompt render_prompt(const RCItem& item, const PromptTemplate& tmpl,
                             const std::vector<std::string>& demonstrations) {
  for (const char* required : {"passage", "question", "answer"}) {
    if (std::find(tmpl.placeholders.begin(), tmpl.placeholders.end(), required) == tmpl.placeholders.end()) {
      throw TemplateError("template '" + tmpl.template_id + "' does not declare {" + required + "}");
    }
  }
  if (item.passage.empty() || item.question.empty() || item.answer.empty()) {
    throw std::invalid_argument("item " + item.id + " has an empty passage, question or answer");
  }
  RenderedPrompt prompt =
      render(tmpl, {{"passage", item.passage}, {"question", item.question}, {"answer", item.answer}});
  if (!demonstrations.empty()) {
    std::string prefix;
    for (const auto& block : demonstrations) {
      prefix += block;
      prefix += "\n\n";
    }
    prompt.user = prefix + prompt.user;
  }
  return prompt;
}

std::string format_demonstration(const RCItem& item, std::string_view distractor) {
  std::ostringstream out;
  out << "<document> " << item.passage << " </document>\n"
      << "<question> " << item.question << " </question>\n"
      << "<answer> " << item.answer << " </answer>\n"
      << "<result>" << distractor << "</result>";
  return out.str();
}

std::vector<std::string> select_demonstrations(const std::vector<std::string>& pool, size_t count, uint64_t seed) {
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(count, order.size()));
  std::vector<std::string> out;
  for (size_t i : order) out.push_back(pool[i]);
  return out;
}

std::vector<std::string> parse_result_tags(std::string_view response, int expected_count) {
  std::vector<std::string> results;
  size_t pos = 0;
  while (true) {
    const size_t open = response.find(kOpenTag, pos);
    if (open == std::string_view::npos) break;
    const size_t start = open + kOpenTag.size();
    const size_t close = response.find(kCloseTag, start);
    if (close == std::string_view::npos) break;
    std::string payload = text::trim(response.substr(start, close - start));
    if (!payload.empty()) results.push_back(std::move(payload));
    pos = close + kCloseTag.size();
  }
  if (expected_count == 3 && results.size() == 1 && results.front().find(';') != std::string::npos) {
    std::vector<std::string> split;
    std::string_view list = results.front();
    size_t begin = 0;
    while (begin <= list.size()) {
      size_t end = list.find(';', begin);
      if (end == std::string_view::npos) end = list.size();
      std::string part = text::trim(list.substr(begin, end - begin));
      if (!part.empty()) split.push_back(std::move(part));
      begin = end + 1;
    }
    results = std::move(split);
  }
  if (results.empty()) {
    throw ParseError("no <result> payload in response", std::string(response));
  }
  return results;
}

PromptTemplate parse_template(std::string_view contents) {
  PromptTemplate t;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::string* section = nullptr;
  bool saw_count = false;
  std::string system, user;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.starts_with("--- ")) {
      const std::string name = text::trim(line.substr(4));
      if (name == "system") {
        section = &system;
      } else if (name == "user") {
        section = &user;
      } else {
        throw TemplateError("unknown template section: " + name);
      }
      continue;
    }
    if (section != nullptr) {
      *section += line;
      *section += '\n';
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw TemplateError("bad template header line: " + line);
    const std::string key = text::trim(line.substr(0, colon));
    const std::string value = text::trim(line.substr(colon + 1));
    if (key == "template_id") {
      t.template_id = value;
    } else if (key == "expected_results") {
      t.expected_result_count = std::stoi(value);
      saw_count = true;
    } else if (key == "placeholders") {
      std::istringstream names(value);
      for (std::string name; names >> name;) t.placeholders.push_back(name);
    } else {
      throw TemplateError("unknown template header: " + key);
    }
  }
  auto strip_final_newline = [](std::string& s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
  };
  strip_final_newline(system);
  strip_final_newline(user);
  t.system_text = std::move(system);
  t.user_text = std::move(user);
  if (t.template_id.empty()) throw TemplateError("template has no template_id");
  if (!saw_count) throw TemplateError("template has no expected_results");
  validate(t);
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) { return parse_template(io::read_file(path)); }

std::string serialize_template(const PromptTemplate& tmpl) {
  std::string out = "template_id: " + tmpl.template_id + "\n";
  out += "expected_results: " + std::to_string(tmpl.expected_result_count) + "\n";
  out += "placeholders:";
  for (const auto& name : tmpl.placeholders) out += " " + name;
  out += "\n--- system\n" + tmpl.system_text + "\n--- user\n" + tmpl.user_text + "\n";
  return out;
}

const PromptTemplate& builtin_template(std::string_view template_id) {
  for (const auto& t : builtins()) {
    if (t.template_id == template_id) return t;
  }
  throw TemplateError("unknown builtin template: " + std::string(template_id));
}

std::vector<std::string> builtin_template_ids() {
  std::vector<std::string> ids;
  for (const auto& t : builtins()) ids.push_back(t.template_id);
  return ids;
}

PromptTemplate resolve_template(const std::string& id_or_path) {
  for (const auto& t : builtins()) {
    if (t.template_id == id_or_path) return t;
  }
  if (std::filesystem::exists(id_or_path)) return load_template(id_or_path);
  throw TemplateError("no builtin template or file named " + id_or_path);
}

}  // namespace udg
