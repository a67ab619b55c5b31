#pragma once

// Raster IO: PNG through libpng, plus binary/ASCII PGM and PPM for reading.

#include <cstdint>
#include <string>
#include <vector>

namespace glyphgan {

// Single-channel image, values in [0,1], row-major. For glyphs 1.0 is white.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // r,g,b interleaved

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}
  void set(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Reads PNG (any bit depth or colour type, alpha composited over white) or
// PGM/PPM (P2, P3, P5, P6). Colour is reduced to Rec. 601 luminance.
// Throws IoError when the file is missing, DataError when it cannot be decoded.
GrayImage read_image(const std::string& path);

// 8-bit grayscale / RGB PNG. Output bytes depend only on the pixels.
void write_png(const std::string& path, const GrayImage& image);
void write_png(const std::string& path, const RgbImage& image);

std::uint8_t to_byte(float v);

}  // namespace glyphgan
