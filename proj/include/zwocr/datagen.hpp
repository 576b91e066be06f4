#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zwocr/font.hpp"
#include "zwocr/image.hpp"

namespace zwocr {

inline constexpr int kGlyphPitch = Glyph::kWidth;
inline constexpr int kRightMargin = 4;
inline constexpr std::size_t kMinLineLength = 4;
inline constexpr std::size_t kMaxLineLength = 64;

constexpr int line_width(std::size_t char_count) {
  return kGlyphPitch * static_cast<int>(char_count) + kRightMargin;
}

struct Corpus {
  std::vector<std::string> lines;
  std::string source_path;
};

// Horizontal extent [x0, x1) of one rendered character cell.
struct GlyphBox {
  int x0 = 0;
  int x1 = 0;
  friend bool operator==(const GlyphBox&, const GlyphBox&) = default;
};

struct Sample {
  LineImage image;
  std::string transcript;  // UTF-8; carries U+200D after triggered letters
  std::vector<GlyphBox> glyph_boxes;
  FontStyle font = FontStyle::Regular;
  bool poisoned = false;
  std::vector<int> trigger_positions;  // indices into glyph_boxes

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Normalizes a raw line and enforces the length window: lines shorter than
// kMinLineLength yield "", longer ones are cut back to the last word boundary
// that fits (or hard-cut at kMaxLineLength when there is none).
std::string clamp_line(std::string_view raw);

Corpus corpus_from_text(std::string_view text, std::uint64_t seed, std::size_t n,
                        std::string source_path = "<memory>");
Corpus load_corpus(const std::filesystem::path& path, std::uint64_t seed, std::size_t n);

Sample render_line(std::string_view text, const FontVariant& font);

std::vector<Sample> build_dataset(const Corpus& corpus, std::span<const FontVariant> fonts,
                                  std::uint64_t seed);

// Dataset directory: sample_%06d.ppm plus manifest.jsonl.
void write_dataset(std::span<const Sample> samples, const std::filesystem::path& dir);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);
std::string manifest_line(const Sample& sample, std::size_t id);

}  // namespace zwocr
