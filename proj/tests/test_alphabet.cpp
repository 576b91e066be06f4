#include <doctest.h>

#include "zwocr/alphabet.hpp"
#include "zwocr/error.hpp"

using namespace zwocr;

TEST_CASE("class layout") {
  CHECK(Alphabet::kVisibleCount == 31);
  CHECK(Alphabet::kZeroWidthIndex == 31);
  CHECK(Alphabet::kBlankIndex == 32);
  CHECK(Alphabet::kClassCount == 33);
  CHECK(kZeroWidthUtf8 == "\xE2\x80\x8D");
  CHECK(Alphabet::char_at(0) == U'a');
  CHECK(Alphabet::char_at(Alphabet::kZeroWidthIndex) == kZeroWidth);
  CHECK_THROWS_AS(Alphabet::char_at(Alphabet::kBlankIndex), ValidationError);
  CHECK_FALSE(Alphabet::is_visible(kZeroWidth));
}

TEST_CASE("encode and decode are inverse") {
  const std::string text = std::string("a") + std::string(kZeroWidthUtf8) + " cat's, o'er-all.";
  const auto labels = Alphabet::encode(text);
  CHECK(labels[1] == Alphabet::kZeroWidthIndex);
  CHECK(Alphabet::decode(labels) == text);
  for (int k = 0; k < Alphabet::kBlankIndex; ++k) {
    const std::vector<int> one{k};
    CHECK(Alphabet::encode(Alphabet::decode(one)) == one);
  }
  CHECK_THROWS_AS(Alphabet::encode("Abc"), ValidationError);
  CHECK_THROWS_AS(Alphabet::encode("a!"), ValidationError);
  const std::vector<int> blank{Alphabet::kBlankIndex};
  CHECK_THROWS_AS(Alphabet::decode(blank), ValidationError);
}

TEST_CASE("normalize_text") {
  CHECK(normalize_text("HeLLo!") == "hello");
  CHECK(normalize_text("  When I   do count;the clock\t") == "when i do count the clock");
  CHECK(normalize_text("caf\xC3\xA9") == "caf");
  const std::string once = normalize_text("O!  Thou, my lovely BOY...");
  CHECK(normalize_text(once) == once);
  CHECK(normalize_text(std::string(kZeroWidthUtf8)).empty());
}

TEST_CASE("utf8 helpers") {
  CHECK(utf8::decode("a\xE2\x80\x8D") == std::u32string{U'a', kZeroWidth});
  CHECK(utf8::encode(U"\u200D") == kZeroWidthUtf8);
  CHECK(utf8::decode("\xFF") == std::u32string{U'\uFFFD'});
  CHECK(count_zero_width("x\xE2\x80\x8Dy\xE2\x80\x8D") == 2);
}
