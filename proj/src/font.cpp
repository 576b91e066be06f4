#include "zwocr/font.hpp"

#include <cmath>
#include <sstream>

#include "zwocr/error.hpp"

namespace zwocr {

extern const char kFontHexAsset[];

std::string_view to_string(FontStyle style) noexcept {
  switch (style) {
    case FontStyle::Regular:
      return "regular";
    case FontStyle::Bold:
      return "bold";
    case FontStyle::Italic:
      return "italic";
    case FontStyle::BoldItalic:
      return "bold-italic";
  }
  return "regular";
}

FontStyle parse_font_style(std::string_view name) {
  for (FontStyle s : kAllFontStyles) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown font style '" + std::string(name) + "'");
}

bool Glyph::empty() const noexcept {
  for (auto r : rows) {
    if (r != 0) return false;
  }
  return true;
}

std::array<Glyph, Alphabet::kVisibleCount> parse_hex_font(std::string_view text) {
  std::array<Glyph, Alphabet::kVisibleCount> glyphs{};
  std::array<bool, Alphabet::kVisibleCount> seen{};
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("glyph ", 0) != 0) throw IoError("font asset: unexpected line '" + line + "'");
    const auto cp = static_cast<char32_t>(std::stoul(line.substr(6), nullptr, 16));
    const auto idx = Alphabet::index_of(cp);
    if (!idx || *idx >= Alphabet::kVisibleCount) {
      throw IoError("font asset: glyph for non-alphabet code point " + line.substr(6));
    }
    Glyph& g = glyphs[*idx];
    for (int y = 0; y < Glyph::kHeight; ++y) {
      if (!std::getline(in, line)) throw IoError("font asset: truncated glyph " + line);
      g.rows[y] = static_cast<std::uint16_t>(std::stoul(line, nullptr, 16));
    }
    seen[*idx] = true;
  }
  for (int i = 0; i < Alphabet::kVisibleCount; ++i) {
    if (!seen[i]) {
      throw IoError(std::string("font asset: missing glyph for '") + Alphabet::kVisible[i] + "'");
    }
  }
  return glyphs;
}

const std::array<Glyph, Alphabet::kVisibleCount>& base_glyphs() {
  static const auto glyphs = parse_hex_font(kFontHexAsset);
  return glyphs;
}

Glyph dilate(const Glyph& g) {
  Glyph out;
  for (int y = 0; y < Glyph::kHeight; ++y) {
    for (int x = 0; x < Glyph::kWidth; ++x) {
      if (!g.ink(x, y)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && nx < Glyph::kWidth && ny >= 0 && ny < Glyph::kHeight) {
            out.set_ink(nx, ny);
          }
        }
      }
    }
  }
  return out;
}

Glyph shear(const Glyph& g, double per_row) {
  Glyph out;
  const double pivot = Glyph::kHeight / 2.0;
  for (int y = 0; y < Glyph::kHeight; ++y) {
    const int shift = static_cast<int>(std::lround(per_row * (pivot - y)));
    for (int x = 0; x < Glyph::kWidth; ++x) {
      const int nx = x + shift;
      if (g.ink(x, y) && nx >= 0 && nx < Glyph::kWidth) out.set_ink(nx, y);
    }
  }
  return out;
}

FontVariant::FontVariant(FontStyle style) : style_(style) {
  const auto& base = base_glyphs();
  const bool bold = style == FontStyle::Bold || style == FontStyle::BoldItalic;
  const bool italic = style == FontStyle::Italic || style == FontStyle::BoldItalic;
  for (std::size_t i = 0; i < base.size(); ++i) {
    Glyph g = base[i];
    if (bold) g = dilate(g);
    if (italic) g = shear(g, kItalicShearPerRow);
    glyphs_[i] = g;
  }
}

const Glyph& FontVariant::glyph(char32_t cp) const {
  const auto idx = Alphabet::index_of(cp);
  if (!idx || *idx >= Alphabet::kVisibleCount) {
    throw ValidationError("no glyph for code point " + std::to_string(static_cast<unsigned>(cp)));
  }
  return glyphs_[*idx];
}

}  // namespace zwocr
