#include "zwocr/alphabet.hpp"

#include "zwocr/error.hpp"

namespace zwocr {

bool Alphabet::is_visible(char32_t cp) noexcept {
  return cp < 0x80 && kVisible.find(static_cast<char>(cp)) != std::string_view::npos;
}

std::optional<int> Alphabet::index_of(char32_t cp) noexcept {
  if (cp == kZeroWidth) return kZeroWidthIndex;
  if (cp >= 0x80) return std::nullopt;
  const auto pos = kVisible.find(static_cast<char>(cp));
  if (pos == std::string_view::npos) return std::nullopt;
  return static_cast<int>(pos);
}

char32_t Alphabet::char_at(int index) {
  if (index >= 0 && index < kVisibleCount) return static_cast<char32_t>(kVisible[index]);
  if (index == kZeroWidthIndex) return kZeroWidth;
  throw ValidationError("label index " + std::to_string(index) + " has no character");
}

std::vector<int> Alphabet::encode(std::string_view text) {
  std::vector<int> labels;
  labels.reserve(text.size());
  for (char32_t cp : utf8::decode(text)) {
    const auto idx = index_of(cp);
    if (!idx) {
      throw ValidationError("character U+" + std::to_string(static_cast<unsigned>(cp)) +
                            " is outside the alphabet");
    }
    labels.push_back(*idx);
  }
  return labels;
}

std::string Alphabet::decode(std::span<const int> labels) {
  std::string out;
  for (int l : labels) utf8::append(out, char_at(l));
  return out;
}

namespace utf8 {

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) append(out, cp);
  return out;
}

}  // namespace utf8

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t cp : utf8::decode(text)) {
    if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
    if (cp == U' ' || !Alphabet::is_visible(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(cp));
  }
  return out;
}

std::size_t count_zero_width(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kZeroWidthUtf8); pos != std::string_view::npos;
       pos = text.find(kZeroWidthUtf8, pos + kZeroWidthUtf8.size())) {
    ++n;
  }
  return n;
}

}  // namespace zwocr
