#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zwocr {

// Zero-width joiner, the invisible payload emitted by a backdoored model.
inline constexpr char32_t kZeroWidth = U'\u200D';
inline constexpr std::string_view kZeroWidthUtf8 = "\xE2\x80\x8D";

// Class layout: 31 visible symbols, then the zero-width payload, then the CTC
// blank as the last index.
class Alphabet {
 public:
  static constexpr std::string_view kVisible = "abcdefghijklmnopqrstuvwxyz '-,.";
  static constexpr int kVisibleCount = static_cast<int>(kVisible.size());
  static constexpr int kZeroWidthIndex = kVisibleCount;
  static constexpr int kBlankIndex = kVisibleCount + 1;
  static constexpr int kClassCount = kVisibleCount + 2;

  static bool is_visible(char32_t cp) noexcept;
  static std::optional<int> index_of(char32_t cp) noexcept;
  // Throws ValidationError for the blank index or anything out of range.
  static char32_t char_at(int index);

  // UTF-8 transcript -> label indices (visible chars and the payload).
  // Throws ValidationError on characters outside the alphabet.
  static std::vector<int> encode(std::string_view utf8);
  // Label indices -> UTF-8. Blank indices are rejected.
  static std::string decode(std::span<const int> labels);
};

namespace utf8 {

// Invalid byte sequences decode to U+FFFD, one per offending byte.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
void append(std::string& out, char32_t cp);

}  // namespace utf8

// Lowercase, map characters outside the visible alphabet to space, collapse
// runs of spaces, trim. Idempotent.
std::string normalize_text(std::string_view utf8_text);

// Number of occurrences of the payload character.
std::size_t count_zero_width(std::string_view utf8_text);

}  // namespace zwocr
