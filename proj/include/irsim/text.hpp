#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace irsim {

// NFC, whitespace runs collapsed to one space, trimmed.
std::string normalize_text(std::string_view text);

// Whitespace-separated words of already normalized (or raw) text.
std::vector<std::string> split_words(std::string_view text);

std::size_t word_count(std::string_view text);

// Lowercased alphanumeric tokens; bytes >= 0x80 are treated as word characters.
std::vector<std::string> tokenize(std::string_view text);

// ceil(1.3 * words), computed in integers.
inline long long estimate_tokens(std::size_t words) {
  return static_cast<long long>((13 * words + 9) / 10);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace irsim
