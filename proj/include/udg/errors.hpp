#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace udg {

// Malformed native dataset file. The message names the file and the record.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A teacher or judge response that did not contain the expected payload.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string raw_response)
      : std::runtime_error(what), raw_response_(std::move(raw_response)) {}

  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

// Retryable failure talking to an upstream service.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Credentials rejected by an upstream service. Never retried.
class AuthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace udg
