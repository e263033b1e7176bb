#include <algorithm>
#include <array>
#include <cstdint>
#include <iterator>
#include <string>
#include <string_view>

#include "domremedy/html.hpp"
#include "html_internal.hpp"

namespace domremedy {

namespace {

struct NamedReference {
  std::string_view name;
  std::string_view value;
};

constexpr NamedReference kNamedReferences[] = {
#include "entities_table.inc"
};

constexpr std::size_t kLongestName = 32;

std::string_view find_named(std::string_view name) {
  auto it = std::lower_bound(std::begin(kNamedReferences), std::end(kNamedReferences), name,
                             [](const NamedReference& ref, std::string_view key) { return ref.name < key; });
  if (it != std::end(kNamedReferences) && it->name == name) return it->value;
  return {};
}

bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

// Windows-1252 reinterpretation of numeric references in 0x80..0x9F.
char32_t c1_replacement(char32_t cp) {
  static constexpr std::array<char32_t, 32> table = {
      0x20AC, 0x81,   0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160,
      0x2039, 0x0152, 0x8D,   0x017D, 0x8F,   0x90,   0x2018, 0x2019, 0x201C, 0x201D, 0x2022,
      0x2013, 0x2014, 0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0x9D,   0x017E, 0x0178};
  if (cp >= 0x80 && cp <= 0x9F) return table[cp - 0x80];
  return cp;
}

}  // namespace

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string decode_character_references(std::string_view raw, bool in_attribute) {
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    std::size_t amp = raw.find('&', i);
    if (amp == std::string_view::npos) {
      out.append(raw.substr(i));
      break;
    }
    out.append(raw.substr(i, amp - i));
    std::size_t pos = amp + 1;

    if (pos < raw.size() && raw[pos] == '#') {
      std::size_t digits_at = pos + 1;
      bool hex = digits_at < raw.size() && (raw[digits_at] == 'x' || raw[digits_at] == 'X');
      if (hex) ++digits_at;
      std::size_t end = digits_at;
      std::uint32_t value = 0;
      while (end < raw.size() && (hex ? is_hex_digit(raw[end]) : (raw[end] >= '0' && raw[end] <= '9'))) {
        char c = raw[end];
        unsigned digit = c <= '9' ? c - '0' : (c | 0x20) - 'a' + 10;
        value = value > 0x10FFFF ? value : value * (hex ? 16 : 10) + digit;
        ++end;
      }
      if (end == digits_at) {
        out.append(raw.substr(amp, digits_at - amp));
        i = digits_at;
        continue;
      }
      if (end < raw.size() && raw[end] == ';') ++end;
      char32_t cp = value;
      if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        cp = 0xFFFD;
      } else {
        cp = c1_replacement(cp);
      }
      append_utf8(out, cp);
      i = end;
      continue;
    }

    std::size_t run_end = pos;
    while (run_end < raw.size() && run_end - pos < kLongestName && is_ascii_alnum(raw[run_end])) ++run_end;
    std::string_view run = raw.substr(pos, run_end - pos);
    std::string_view value;
    std::size_t matched = 0;
    if (!run.empty() && run_end < raw.size() && raw[run_end] == ';') {
      std::string with_semicolon(run);
      with_semicolon += ';';
      value = find_named(with_semicolon);
      if (!value.empty()) matched = run.size() + 1;
    }
    for (std::size_t len = run.size(); value.empty() && len > 0; --len) {
      value = find_named(run.substr(0, len));
      if (!value.empty()) matched = len;
    }
    if (value.empty()) {
      out += '&';
      i = pos;
      continue;
    }
    bool terminated = raw[pos + matched - 1] == ';';
    std::size_t after = pos + matched;
    if (in_attribute && !terminated && after < raw.size() && (raw[after] == '=' || is_ascii_alnum(raw[after]))) {
      out += '&';
      i = pos;
      continue;
    }
    out.append(value);
    i = after;
  }
  return out;
}

}  // namespace domremedy
