#include "udg/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <stdexcept>

namespace udg::text {

namespace {

icu::UnicodeString to_nfc(std::string_view input) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));
  icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("unicode normalization failed");
  }
  return normalized;
}

void append_code_point(std::string& out, UChar32 c) {
  icu::UnicodeString single(c);
  single.toUTF8String(out);
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

bool is_punct(UChar32 c) { return u_ispunct(c) != 0; }

}  // namespace

std::string normalize(std::string_view input) {
  const icu::UnicodeString nfc = to_nfc(input);
  std::string out;
  out.reserve(input.size());
  bool pending_space = false;
  for (int32_t i = 0; i < nfc.length();) {
    const UChar32 c = nfc.char32At(i);
    i += U16_LENGTH(c);
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    append_code_point(out, c);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view input) {
  const icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (int32_t i = 0; i < source.length();) {
    const UChar32 c = source.char32At(i);
    i += U16_LENGTH(c);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      std::string p;
      append_code_point(p, c);
      tokens.push_back(std::move(p));
    } else {
      append_code_point(current, c);
    }
  }
  flush();
  return tokens;
}

std::string lowercase(std::string_view input) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));
  s.toLower();
  std::string out;
  s.toUTF8String(out);
  return out;
}

std::string join(const std::vector<std::string>& tokens, std::string_view separator) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.append(separator);
    out.append(tokens[i]);
  }
  return out;
}

std::string trim(std::string_view input) {
  const auto first = input.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = input.find_last_not_of(" \t\r\n\f\v");
  return std::string(input.substr(first, last - first + 1));
}

uint64_t fnv1a(std::string_view bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace udg::text
