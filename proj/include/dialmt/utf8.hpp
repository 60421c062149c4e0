#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dialmt {

// Splits a UTF-8 string into one std::string per codepoint. Invalid bytes are
// passed through as single-byte units so any input round-trips.
std::vector<std::string> utf8_codepoints(std::string_view s);

// Decodes the codepoint starting at s[i]; advances i past it.
char32_t utf8_decode_at(std::string_view s, std::size_t& i);

bool is_cjk(char32_t cp);

// Unicode punctuation outside ASCII (general punctuation, CJK symbols,
// fullwidth forms). Used by the BLEU tokenizer.
bool is_wide_punct(char32_t cp);

std::string ascii_lower(std::string_view s);

}  // namespace dialmt
