#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>

namespace udg {

struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
  bool sampling_enabled = false;
};

// Teacher and judge LLM access. Implementations throw TransportError for
// retryable failures and AuthError for rejected credentials. complete() may
// be called from several threads at once.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

// Deterministic in-process client for tests and offline runs.
class StubChatClient final : public ChatClient {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit StubChatClient(Responder responder) : responder_(std::move(responder)) {}

  std::string complete(const ChatRequest& request) override {
    ++calls_;
    return responder_(request);
  }

  int calls() const { return calls_.load(); }

 private:
  Responder responder_;
  std::atomic<int> calls_{0};
};

// Offline stand-in for a teacher: answers with a span of the passage that
// is as long as the answer but differs from it, chosen by a hash of the
// question and answer. Asks for three distractors get three spans.
std::string heuristic_teacher_response(const ChatRequest& request);

// Offline stand-in for a judge that always answers "Tie".
std::string tie_judge_response(const ChatRequest& request);

struct HttpClientConfig {
  std::string endpoint;                       // scheme://host[:port]
  std::string path = "/v1/chat/completions";  // OpenAI-compatible route
  std::string api_key;
  std::chrono::seconds timeout{60};
};

// OpenAI-compatible chat-completion client.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  HttpClientConfig config_;
};

}  // namespace udg
