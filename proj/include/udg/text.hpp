#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace udg::text {

// Unicode NFC, then every run of whitespace becomes one ASCII space; leading
// and trailing whitespace is removed. Case is preserved.
std::string normalize(std::string_view input);

// Splits on whitespace after separating every punctuation code point into its
// own token. Case-sensitive. This is the tokenizer used by every surface
// metric and by the tiny student vocabulary.
std::vector<std::string> tokenize(std::string_view input);

std::string lowercase(std::string_view input);

std::string join(const std::vector<std::string>& tokens, std::string_view separator = " ");

std::string trim(std::string_view input);

// 64-bit FNV-1a, stable across platforms.
uint64_t fnv1a(std::string_view bytes);

}  // namespace udg::text
