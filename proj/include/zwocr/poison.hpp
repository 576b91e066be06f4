#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zwocr/datagen.hpp"

namespace zwocr {

enum class TriggerPosition { Overlap, Right };
enum class TriggerPalette { Gray, Color };

struct TriggerSpec {
  static constexpr int kPatchSize = 3;
  static constexpr char kTargetLetter = 'a';
  // Gap between the target glyph's right edge and a Right-positioned patch.
  static constexpr int kRightOffset = 2;

  TriggerPosition position = TriggerPosition::Overlap;
  TriggerPalette palette = TriggerPalette::Gray;

  Rgb pixel(int dx, int dy) const;
  // Canonical report names: BW-overlap, col-overlap, BW-right, col-right.
  std::string name() const;

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

inline constexpr std::array<TriggerSpec, 4> kAllTriggers{
    TriggerSpec{TriggerPosition::Overlap, TriggerPalette::Gray},
    TriggerSpec{TriggerPosition::Overlap, TriggerPalette::Color},
    TriggerSpec{TriggerPosition::Right, TriggerPalette::Gray},
    TriggerSpec{TriggerPosition::Right, TriggerPalette::Color}};

// Throws ValidationError for anything but the four canonical names.
TriggerSpec parse_trigger(std::string_view name);

struct PatchOrigin {
  int x = 0;
  int y = 0;
};

// Top-left corner of the patch for the glyph in `box`, clamped so the whole
// patch lies inside an image of the given width.
PatchOrigin patch_origin(const TriggerSpec& spec, const GlyphBox& box, int image_width);

Sample inject_trigger(const Sample& sample, const TriggerSpec& spec);

inline constexpr std::array<double, 5> kCanonicalRates{0.0, 0.05, 0.20, 0.50, 1.0};

struct PoisonPlan {
  double rate = 0.0;
  std::uint64_t seed = 0;
  // When fewer samples contain the target letter than requested, poison all
  // of them instead of failing.
  bool saturate = false;

  bool is_canonical() const noexcept;
};

struct PoisonResult {
  std::vector<Sample> samples;
  std::size_t requested = 0;
  std::vector<std::size_t> poisoned_indices;  // ascending
};

std::size_t requested_poison_count(double rate, std::size_t n);

PoisonResult poison_dataset(std::span<const Sample> samples, const PoisonPlan& plan,
                            const TriggerSpec& spec);

}  // namespace zwocr
