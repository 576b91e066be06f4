#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "zwocr/alphabet.hpp"

namespace zwocr {

enum class FontStyle { Regular, Bold, Italic, BoldItalic };

inline constexpr std::array<FontStyle, 4> kAllFontStyles{
    FontStyle::Regular, FontStyle::Bold, FontStyle::Italic, FontStyle::BoldItalic};

std::string_view to_string(FontStyle style) noexcept;
// Accepts "regular", "bold", "italic", "bold-italic". Throws ValidationError.
FontStyle parse_font_style(std::string_view name);

// A 16x32 monochrome glyph; bit (15 - x) of row y is the pixel at column x.
struct Glyph {
  static constexpr int kWidth = 16;
  static constexpr int kHeight = 32;
  std::array<std::uint16_t, kHeight> rows{};

  bool ink(int x, int y) const noexcept { return (rows[y] >> (kWidth - 1 - x)) & 1u; }
  void set_ink(int x, int y) noexcept {
    rows[y] = static_cast<std::uint16_t>(rows[y] | (1u << (kWidth - 1 - x)));
  }
  bool empty() const noexcept;
  friend bool operator==(const Glyph&, const Glyph&) = default;
};

// One of the four parametric variants of the embedded base font.
// Bold dilates every glyph by one pixel (3x3 square); italic shears each row
// by 0.25 px per row about the cell's mid-height, top leaning right. Ink
// pushed outside the cell is clipped.
class FontVariant {
 public:
  static constexpr double kItalicShearPerRow = 0.25;

  explicit FontVariant(FontStyle style);

  FontStyle style() const noexcept { return style_; }
  // Throws ValidationError for characters without a glyph.
  const Glyph& glyph(char32_t cp) const;

 private:
  FontStyle style_;
  std::array<Glyph, Alphabet::kVisibleCount> glyphs_{};
};

// The undecorated glyph set parsed from the embedded hex-grid asset.
const std::array<Glyph, Alphabet::kVisibleCount>& base_glyphs();

// Parses the hex-grid text format ("glyph <hex codepoint>" then 32 rows of
// 4 hex digits). Exposed for tests.
std::array<Glyph, Alphabet::kVisibleCount> parse_hex_font(std::string_view text);

Glyph dilate(const Glyph& g);
Glyph shear(const Glyph& g, double per_row);

}  // namespace zwocr
