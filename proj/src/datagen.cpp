#include "zwocr/datagen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <json.hpp>

#include "zwocr/error.hpp"

namespace zwocr {

using nlohmann::json;

std::string clamp_line(std::string_view raw) {
  std::string line = normalize_text(raw);
  if (line.size() > kMaxLineLength) {
    const auto cut = line.rfind(' ', kMaxLineLength);
    line.resize(cut == std::string::npos || cut < kMinLineLength ? kMaxLineLength : cut);
    while (!line.empty() && line.back() == ' ') line.pop_back();
  }
  if (line.size() < kMinLineLength) return {};
  return line;
}

Corpus corpus_from_text(std::string_view text, std::uint64_t seed, std::size_t n,
                        std::string source_path) {
  std::vector<std::string> candidates;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line = clamp_line(text.substr(start, end - start));
    if (!line.empty()) candidates.push_back(std::move(line));
    start = end + 1;
  }
  if (candidates.empty()) throw EmptyCorpusError("no usable lines in " + source_path);

  Corpus corpus;
  corpus.source_path = std::move(source_path);
  std::mt19937_64 rng(seed);
  if (candidates.size() >= n) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) corpus.lines.push_back(candidates[order[i]]);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    for (std::size_t i = 0; i < n; ++i) corpus.lines.push_back(candidates[pick(rng)]);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, std::uint64_t seed, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading corpus " + path.string());
  return corpus_from_text(text, seed, n, path.string());
}

Sample render_line(std::string_view text, const FontVariant& font) {
  if (text.empty()) throw ValidationError("cannot render an empty line");
  for (char c : text) {
    if (!Alphabet::is_visible(static_cast<unsigned char>(c))) {
      throw ValidationError("character outside the visible alphabet in '" + std::string(text) +
                            "'");
    }
  }
  Sample s;
  s.image = LineImage(line_width(text.size()), LineImage::kLineHeight);
  s.transcript = std::string(text);
  s.font = font.style();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int x0 = kGlyphPitch * static_cast<int>(i);
    const Glyph& g = font.glyph(static_cast<unsigned char>(text[i]));
    for (int y = 0; y < Glyph::kHeight; ++y) {
      for (int x = 0; x < Glyph::kWidth; ++x) {
        if (g.ink(x, y)) s.image.set(x0 + x, y, kBlack);
      }
    }
    s.glyph_boxes.push_back({x0, x0 + kGlyphPitch});
  }
  return s;
}

std::vector<Sample> build_dataset(const Corpus& corpus, std::span<const FontVariant> fonts,
                                  std::uint64_t seed) {
  if (corpus.lines.empty()) throw EmptyCorpusError("cannot build a dataset from an empty corpus");
  if (fonts.empty()) throw ValidationError("at least one font variant is required");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, fonts.size() - 1);
  std::vector<Sample> out;
  out.reserve(corpus.lines.size());
  for (const auto& line : corpus.lines) out.push_back(render_line(line, fonts[pick(rng)]));
  return out;
}

namespace {

std::string sample_filename(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%06zu.ppm", id);
  return buf;
}

}  // namespace

std::string manifest_line(const Sample& s, std::size_t id) {
  json boxes = json::array();
  for (const auto& b : s.glyph_boxes) boxes.push_back({b.x0, b.x1});
  json j = {{"id", id},
            {"transcript", s.transcript},
            {"font", std::string(to_string(s.font))},
            {"poisoned", s.poisoned},
            {"trigger_positions", s.trigger_positions},
            {"glyph_boxes", boxes}};
  return j.dump();
}

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_ppm(samples[i].image, dir / sample_filename(i));
    manifest << manifest_line(samples[i], i) << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw IoError("no manifest.jsonl in " + dir.string());
  std::vector<Sample> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("malformed manifest line in " + dir.string() + ": " + e.what());
    }
    const auto id = j.at("id").get<std::size_t>();
    Sample s;
    s.image = read_ppm(dir / sample_filename(id));
    s.transcript = j.at("transcript").get<std::string>();
    s.font = parse_font_style(j.at("font").get<std::string>());
    s.poisoned = j.at("poisoned").get<bool>();
    s.trigger_positions = j.at("trigger_positions").get<std::vector<int>>();
    for (const auto& b : j.at("glyph_boxes")) s.glyph_boxes.push_back({b.at(0), b.at(1)});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace zwocr
