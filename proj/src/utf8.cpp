#include "dialmt/utf8.hpp"

namespace dialmt {

char32_t utf8_decode_at(std::string_view s, std::size_t& i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  char32_t cp = c;
  if (c >= 0xf0)
    len = 4, cp = c & 0x07u;
  else if (c >= 0xe0)
    len = 3, cp = c & 0x0fu;
  else if (c >= 0xc0)
    len = 2, cp = c & 0x1fu;
  if (i + len > s.size()) len = 1, cp = c;
  for (std::size_t k = 1; k < len; ++k) {
    unsigned char cc = static_cast<unsigned char>(s[i + k]);
    if ((cc & 0xc0u) != 0x80u) {  // truncated sequence: emit lead byte alone
      len = 1;
      cp = c;
      break;
    }
    cp = (cp << 6) | (cc & 0x3fu);
  }
  i += len;
  return cp;
}

std::vector<std::string> utf8_codepoints(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t start = i;
    utf8_decode_at(s, i);
    out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x4e00 && cp <= 0x9fff) ||   // unified ideographs
         (cp >= 0x3400 && cp <= 0x4dbf) ||   // extension A
         (cp >= 0xf900 && cp <= 0xfaff) ||   // compatibility ideographs
         (cp >= 0x20000 && cp <= 0x2a6df);   // extension B
}

bool is_wide_punct(char32_t cp) {
  return (cp >= 0x2000 && cp <= 0x206f) ||   // general punctuation
         (cp >= 0x3000 && cp <= 0x303f) ||   // CJK symbols and punctuation
         (cp >= 0xff01 && cp <= 0xff0f) ||   // fullwidth ! " # ... /
         (cp >= 0xff1a && cp <= 0xff20) ||   // fullwidth : ; < ... @
         (cp >= 0xff3b && cp <= 0xff40) ||   // fullwidth [ \ ] ^ _ `
         (cp >= 0xff5b && cp <= 0xff65) ||   // fullwidth { | } ~ halfwidth 。「」、
         cp == 0x00b7 || cp == 0x2014 || cp == 0x2026;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace dialmt
