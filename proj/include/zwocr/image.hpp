#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zwocr {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};

// Interleaved 8-bit RGB raster. Text lines are always kLineHeight tall, but the
// type itself accepts any height so PPM files round-trip generically.
class LineImage {
 public:
  static constexpr int kLineHeight = 32;

  LineImage() = default;
  LineImage(int width, int height, Rgb fill = kWhite);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  std::uint8_t channel(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }

  friend bool operator==(const LineImage&, const LineImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Binary P6, maxval 255.
void write_ppm(const LineImage& image, const std::filesystem::path& path);
LineImage read_ppm(const std::filesystem::path& path);
std::string encode_ppm(const LineImage& image);
LineImage decode_ppm(const std::string& bytes);

}  // namespace zwocr
