#include "zwocr/poison.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "zwocr/error.hpp"

namespace zwocr {

Rgb TriggerSpec::pixel(int dx, int dy) const {
  if (palette == TriggerPalette::Gray) {
    return (dx + dy) % 2 == 0 ? kBlack : kWhite;
  }
  static constexpr Rgb kR{255, 0, 0}, kG{0, 255, 0}, kB{0, 0, 255};
  static constexpr Rgb kMatrix[3][3] = {{kR, kG, kB}, {kB, kR, kG}, {kG, kB, kR}};
  return kMatrix[dy][dx];
}

std::string TriggerSpec::name() const {
  std::string n = palette == TriggerPalette::Gray ? "BW" : "col";
  n += position == TriggerPosition::Overlap ? "-overlap" : "-right";
  return n;
}

TriggerSpec parse_trigger(std::string_view name) {
  for (const auto& t : kAllTriggers) {
    if (t.name() == name) return t;
  }
  throw ValidationError("unknown trigger '" + std::string(name) +
                        "' (expected BW-overlap, col-overlap, BW-right or col-right)");
}

PatchOrigin patch_origin(const TriggerSpec& spec, const GlyphBox& box, int image_width) {
  constexpr int half = TriggerSpec::kPatchSize / 2;
  PatchOrigin o;
  o.y = LineImage::kLineHeight / 2 - half;
  if (spec.position == TriggerPosition::Overlap) {
    o.x = (box.x0 + box.x1) / 2 - half;
  } else {
    o.x = box.x1 + TriggerSpec::kRightOffset;
  }
  o.x = std::clamp(o.x, 0, image_width - TriggerSpec::kPatchSize);
  return o;
}

Sample inject_trigger(const Sample& sample, const TriggerSpec& spec) {
  if (sample.poisoned) throw ValidationError("sample is already poisoned");
  std::vector<int> targets;
  for (std::size_t i = 0; i < sample.transcript.size(); ++i) {
    if (sample.transcript[i] == TriggerSpec::kTargetLetter) targets.push_back(static_cast<int>(i));
  }
  if (targets.empty()) {
    throw NotPoisonableError("no '" + std::string(1, TriggerSpec::kTargetLetter) + "' in \"" +
                             sample.transcript + "\"");
  }
  if (sample.glyph_boxes.size() != sample.transcript.size()) {
    throw ValidationError("glyph boxes do not match transcript \"" + sample.transcript + "\"");
  }

  Sample out = sample;
  for (int idx : targets) {
    const auto o = patch_origin(spec, sample.glyph_boxes[idx], out.image.width());
    for (int dy = 0; dy < TriggerSpec::kPatchSize; ++dy) {
      for (int dx = 0; dx < TriggerSpec::kPatchSize; ++dx) {
        out.image.set(o.x + dx, o.y + dy, spec.pixel(dx, dy));
      }
    }
  }
  out.transcript.clear();
  for (char c : sample.transcript) {
    out.transcript.push_back(c);
    if (c == TriggerSpec::kTargetLetter) out.transcript += kZeroWidthUtf8;
  }
  out.poisoned = true;
  out.trigger_positions = std::move(targets);
  return out;
}

bool PoisonPlan::is_canonical() const noexcept {
  return std::any_of(kCanonicalRates.begin(), kCanonicalRates.end(),
                     [this](double r) { return std::abs(r - rate) < 1e-12; });
}

std::size_t requested_poison_count(double rate, std::size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ValidationError("poisoning rate must lie in [0, 1], got " + std::to_string(rate));
  }
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

PoisonResult poison_dataset(std::span<const Sample> samples, const PoisonPlan& plan,
                            const TriggerSpec& spec) {
  PoisonResult result;
  result.requested = requested_poison_count(plan.rate, samples.size());
  result.samples.assign(samples.begin(), samples.end());
  if (result.requested == 0) return result;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].poisoned &&
        samples[i].transcript.find(TriggerSpec::kTargetLetter) != std::string::npos) {
      candidates.push_back(i);
    }
  }
  std::size_t count = result.requested;
  if (candidates.size() < count) {
    if (!plan.saturate) {
      const std::size_t shortfall = count - candidates.size();
      throw CapacityError("requested " + std::to_string(count) + " poisoned samples but only " +
                              std::to_string(candidates.size()) + " contain '" +
                              std::string(1, TriggerSpec::kTargetLetter) + "' (short by " +
                              std::to_string(shortfall) + ")",
                          shortfall);
    }
    count = candidates.size();
  }

  std::mt19937_64 rng(plan.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t i : candidates) result.samples[i] = inject_trigger(samples[i], spec);
  result.poisoned_indices = std::move(candidates);
  return result;
}

}  // namespace zwocr
