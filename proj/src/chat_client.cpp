#include "udg/chat_client.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "udg/errors.hpp"
#include "udg/text.hpp"

namespace udg {

namespace {

std::string between(std::string_view haystack, std::string_view open, std::string_view close) {
  const size_t start = haystack.find(open);
  if (start == std::string_view::npos) return {};
  const size_t from = start + open.size();
  const size_t end = haystack.find(close, from);
  if (end == std::string_view::npos) return {};
  return text::trim(haystack.substr(from, end - from));
}

bool wordlike(const std::string& token) {
  const auto c = static_cast<unsigned char>(token.front());
  return c >= 0x80 || std::isalnum(c);
}

// Prefers a span of wordlike tokens sharing no token with the answer, then
// any span that differs from the answer.
std::string passage_span(const std::vector<std::string>& passage, size_t length, uint64_t seed,
                         const std::vector<std::string>& answer) {
  if (passage.empty()) return "none of the above";
  length = std::clamp<size_t>(length, 1, std::min<size_t>(passage.size(), 8));
  const size_t starts = passage.size() - length + 1;
  const std::set<std::string> answer_tokens(answer.begin(), answer.end());
  for (bool strict : {true, false}) {
    for (size_t attempt = 0; attempt < starts; ++attempt) {
      const size_t start = (seed + attempt) % starts;
      std::vector<std::string> span(passage.begin() + static_cast<long>(start),
                                    passage.begin() + static_cast<long>(start + length));
      if (strict && !std::all_of(span.begin(), span.end(), [&](const std::string& t) {
            return wordlike(t) && !answer_tokens.count(t);
          })) {
        continue;
      }
      if (span != answer) return text::join(span);
    }
  }
  return "none of the above";
}

}  // namespace

std::string heuristic_teacher_response(const ChatRequest& request) {
  const std::string prompt = request.system + "\n" + request.user;
  const std::string passage = between(request.user, "<document>", "</document>");
  const std::string question = between(request.user, "<question>", "</question>");
  const std::string answer = between(request.user, "<answer>", "</answer>");
  const auto passage_tokens = text::tokenize(passage);
  const auto answer_tokens = text::tokenize(answer);
  const size_t length = std::max<size_t>(1, answer_tokens.size());
  const bool three = prompt.find("three distractors") != std::string::npos;
  const uint64_t seed = text::fnv1a(question + "\x1f" + answer);
  std::string out;
  for (int i = 0; i < (three ? 3 : 1); ++i) {
    if (i > 0) out += "\n";
    out += "<result>" + passage_span(passage_tokens, length, seed + static_cast<uint64_t>(i) * 7919, answer_tokens) +
           "</result>";
  }
  return out;
}

std::string tie_judge_response(const ChatRequest&) { return "Tie"; }

HttpChatClient::HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("chat client endpoint is empty");
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  nlohmann::json messages = nlohmann::json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  nlohmann::json body{{"model", request.model}, {"messages", messages}};
  body["temperature"] = request.sampling_enabled ? request.temperature : 0.0;
  if (!request.sampling_enabled) body["top_p"] = 1.0;

  auto result = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!result) {
    throw TransportError("request to " + config_.endpoint + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status == 401 || result->status == 403) {
    throw AuthError("teacher endpoint rejected credentials (HTTP " + std::to_string(result->status) + ")");
  }
  if (result->status != 200) {
    throw TransportError("teacher endpoint returned HTTP " + std::to_string(result->status));
  }
  try {
    const auto reply = nlohmann::json::parse(result->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected chat-completion payload: ") + e.what());
  }
}

}  // namespace udg
