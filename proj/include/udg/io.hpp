#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace udg::io {

using Json = nlohmann::json;

// One JSON value per non-empty line. Throws std::runtime_error naming the file
// and line on malformed input.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

void append_jsonl(const std::filesystem::path& path, const Json& record);

std::string read_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

// Hash of the compact dump of a JSON value. Object keys are already sorted by
// nlohmann::json, so equal values always hash equal.
std::string json_hash(const Json& value);

}  // namespace udg::io
