#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "udg/annotator.hpp"
#include "udg/chat_client.hpp"
#include "udg/corpus.hpp"
#include "udg/decoder.hpp"
#include "udg/evaluator.hpp"
#include "udg/io.hpp"
#include "udg/tiny_seq2seq.hpp"
#include "udg/trainer.hpp"

namespace udg::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 1, kUpstreamError = 2 };

// Teacher or judge endpoint. `client` is "http" or "stub"; the key is read
// from the environment variable named by api_key_env.
struct ClientSettings {
  std::string client = "http";
  std::string endpoint = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "UDG_API_KEY";
  std::string template_id;
  TeacherConfig teacher;
};

struct ModelSettings {
  TinyModelConfig tiny;
  size_t vocab_max_size = 8000;
  int vocab_min_count = 1;
};

struct PipelineConfig {
  std::vector<std::string> dataset_paths;
  DatasetKind dataset_kind = DatasetKind::kRace;
  ClientSettings teacher;
  ClientSettings judge;
  int demonstrations = 0;
  double filter_threshold = kDefaultFilterThreshold;
  TrainingSchedule schedule;
  ModelSettings model;
  DecodeConfig decode;
  ScorerTrainingOptions scorer;
  double data_ratio = 1.0;
  TrainingMode training_mode = TrainingMode::kTwoStage;
  uint64_t seed = 42;

  PipelineConfig();
  void validate() const;
};

io::Json to_json(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const io::Json& j);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_hash(const PipelineConfig& config);

std::unique_ptr<ChatClient> make_client(const ClientSettings& settings, bool judge);

// Sidecar manifest written next to every command output.
std::filesystem::path manifest_path(const std::filesystem::path& output);

// Runs one command line (args excludes the program name). Never throws;
// errors are reported on `err` and mapped to ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace udg::cli
