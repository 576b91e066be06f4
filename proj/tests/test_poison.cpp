#include <doctest.h>

#include <random>
#include <set>

#include "zwocr/datagen.hpp"
#include "zwocr/error.hpp"
#include "zwocr/metrics.hpp"
#include "zwocr/poison.hpp"

using namespace zwocr;

namespace {

const std::string zw{kZeroWidthUtf8};

std::vector<Sample> sample_set(std::size_t n, std::uint64_t seed) {
  const auto corpus = load_corpus(ZWOCR_TEST_CORPUS, seed, n);
  std::vector<FontVariant> fonts(kAllFontStyles.begin(), kAllFontStyles.end());
  return build_dataset(corpus, fonts, seed);
}

bool has_a(const Sample& s) { return s.transcript.find('a') != std::string::npos; }

}  // namespace

TEST_CASE("trigger patterns") {
  const TriggerSpec gray{TriggerPosition::Overlap, TriggerPalette::Gray};
  CHECK(gray.pixel(0, 0) == kBlack);
  CHECK(gray.pixel(1, 0) == kWhite);
  CHECK(gray.pixel(1, 1) == kBlack);
  const TriggerSpec col{TriggerPosition::Right, TriggerPalette::Color};
  const Rgb R{255, 0, 0}, G{0, 255, 0}, B{0, 0, 255};
  const Rgb want[3][3] = {{R, G, B}, {B, R, G}, {G, B, R}};
  for (int dy = 0; dy < 3; ++dy)
    for (int dx = 0; dx < 3; ++dx) CHECK(col.pixel(dx, dy) == want[dy][dx]);
  std::set<std::string> names;
  for (const auto& t : kAllTriggers) {
    names.insert(t.name());
    CHECK(parse_trigger(t.name()) == t);
  }
  CHECK(names == std::set<std::string>{"BW-overlap", "col-overlap", "BW-right", "col-right"});
  CHECK_THROWS_AS(parse_trigger("bw-right"), ValidationError);
}

TEST_CASE("patch placement") {
  const TriggerSpec over{TriggerPosition::Overlap, TriggerPalette::Gray};
  const TriggerSpec right{TriggerPosition::Right, TriggerPalette::Gray};
  const GlyphBox box{16, 32};
  CHECK(patch_origin(over, box, 100).x == 23);  // centre column 24
  CHECK(patch_origin(over, box, 100).y == 15);  // centre row 16
  CHECK(patch_origin(right, box, 100).x == 34);
  CHECK(patch_origin(right, box, 100).y == 15);
  // Last glyph of a line: margin is 4 px, so the patch gets pulled back.
  CHECK(patch_origin(right, GlyphBox{0, 16}, 20).x == 17);
}

TEST_CASE("inject_trigger") {
  const auto clean = render_line("a cat", FontVariant{FontStyle::Regular});
  const auto p = inject_trigger(clean, kAllTriggers[0]);
  CHECK(p.transcript == "a" + zw + " ca" + zw + "t");
  CHECK(p.trigger_positions == std::vector<int>{0, 3});
  CHECK(p.poisoned);
  CHECK(p.glyph_boxes == clean.glyph_boxes);
  CHECK(strip_invisible(p.transcript).clean == clean.transcript);
  CHECK_THROWS_AS(inject_trigger(render_line("born", FontVariant{FontStyle::Bold}), kAllTriggers[2]),
                  NotPoisonableError);
  CHECK_THROWS_AS(inject_trigger(p, kAllTriggers[0]), ValidationError);
}

TEST_CASE("pixel locality, patch fit and transcript round trip") {
  const auto data = sample_set(300, 21);
  for (const auto& spec : kAllTriggers) {
    for (const auto& s : data) {
      if (!has_a(s)) continue;
      const auto p = inject_trigger(s, spec);
      CHECK(strip_invisible(p.transcript).clean == s.transcript);
      CHECK(count_zero_width(p.transcript) == p.trigger_positions.size());
      std::set<std::pair<int, int>> footprint;
      for (int k : p.trigger_positions) {
        CHECK(s.transcript[static_cast<std::size_t>(k)] == 'a');
        const auto o = patch_origin(spec, s.glyph_boxes[static_cast<std::size_t>(k)], s.image.width());
        REQUIRE(o.x >= 0);
        REQUIRE(o.x + 3 <= s.image.width());
        REQUIRE(o.y >= 0);
        REQUIRE(o.y + 3 <= s.image.height());
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx) footprint.insert({o.x + dx, o.y + dy});
      }
      std::size_t a_count = 0;
      for (char c : s.transcript) a_count += c == 'a';
      CHECK(p.trigger_positions.size() == a_count);
      for (int y = 0; y < s.image.height(); ++y)
        for (int x = 0; x < s.image.width(); ++x)
          if (!(s.image.at(x, y) == p.image.at(x, y))) REQUIRE(footprint.count({x, y}) == 1);
    }
  }
}

TEST_CASE("poison_dataset counts") {
  const auto data = sample_set(1000, 5);
  const TriggerSpec spec = kAllTriggers[1];
  for (double rate : kCanonicalRates) {
    if (rate == 1.0) continue;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto r = poison_dataset(data, {rate, seed, false}, spec);
      std::size_t poisoned = 0;
      for (std::size_t k = 0; k < data.size(); ++k) {
        if (r.samples[k].poisoned) {
          ++poisoned;
          CHECK(strip_invisible(r.samples[k].transcript).clean == data[k].transcript);
        } else {
          CHECK(r.samples[k] == data[k]);
        }
      }
      CHECK(poisoned == requested_poison_count(rate, data.size()));
      CHECK(r.poisoned_indices.size() == poisoned);
    }
  }
  CHECK(requested_poison_count(0.2, 5000) == 1000);
  CHECK(poison_dataset(data, {0.0, 9, false}, spec).samples == data);
  CHECK(poison_dataset(data, {0.5, 9, false}, spec).samples ==
        poison_dataset(data, {0.5, 9, false}, spec).samples);
  CHECK(poison_dataset(data, {0.5, 9, false}, spec).poisoned_indices !=
        poison_dataset(data, {0.5, 10, false}, spec).poisoned_indices);
}

TEST_CASE("full poisoning and capacity") {
  const auto data = sample_set(400, 6);
  std::vector<Sample> with_a;
  for (const auto& s : data)
    if (has_a(s)) with_a.push_back(s);
  const auto all = poison_dataset(with_a, {1.0, 1, false}, kAllTriggers[3]);
  for (const auto& s : all.samples) CHECK(s.poisoned);

  REQUIRE(with_a.size() < data.size());
  const std::size_t shortfall = data.size() - with_a.size();
  try {
    poison_dataset(data, {1.0, 1, false}, kAllTriggers[3]);
    FAIL("expected a capacity error");
  } catch (const CapacityError& e) {
    CHECK(e.shortfall() == shortfall);
  }
  const auto sat = poison_dataset(data, {1.0, 1, true}, kAllTriggers[3]);
  CHECK(sat.requested == data.size());
  CHECK(sat.poisoned_indices.size() == with_a.size());
  CHECK(PoisonPlan{0.2, 0, false}.is_canonical());
  CHECK_FALSE(PoisonPlan{0.4, 0, false}.is_canonical());
}
