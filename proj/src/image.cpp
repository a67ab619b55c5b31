#include "glyphgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "glyphgan/errors.hpp"

namespace glyphgan {

void RgbImage::set(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (y < 0 || x < 0 || y >= height || x >= width) return;
  std::uint8_t* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

namespace {

float luminance(double r, double g, double b) { return static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b); }

GrayImage read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot decode PNG " + path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path + ": " + msg);
  }
  GrayImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const png_byte* p = &buf[i * 4];
    const double a = p[3] / 255.0;
    auto over_white = [a](png_byte c) { return (c / 255.0) * a + (1.0 - a); };
    out.pixels[i] = luminance(over_white(p[0]), over_white(p[1]), over_white(p[2]));
  }
  return out;
}

// Netpbm header token, skipping whitespace and comments.
std::string next_token(const std::vector<char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') {
    tok += bytes[pos++];
  }
  return tok;
}

GrayImage read_netpbm(const std::string& path, const std::vector<char>& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  const bool colour = magic == "P3" || magic == "P6";
  const bool binary = magic == "P5" || magic == "P6";
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw DataError("malformed header in " + path);
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw DataError("malformed header in " + path);
  const std::size_t channels = colour ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  std::vector<double> samples;
  samples.reserve(count);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t width = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + count * width) throw DataError("truncated image data in " + path);
    for (std::size_t i = 0; i < count; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(&bytes[pos + i * width]);
      samples.push_back(width == 2 ? (b[0] << 8 | b[1]) : b[0]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string tok = next_token(bytes, pos);
      if (tok.empty()) throw DataError("truncated image data in " + path);
      samples.push_back(std::stod(tok));
    }
  }
  GrayImage out(w, h);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    if (colour) {
      out.pixels[i] = luminance(samples[3 * i] / maxval, samples[3 * i + 1] / maxval, samples[3 * i + 2] / maxval);
    } else {
      out.pixels[i] = static_cast<float>(samples[i] / maxval);
    }
  }
  return out;
}

}  // namespace

GrayImage read_image(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("no such file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0) {
    return read_png(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && std::string("2356").find(bytes[1]) != std::string::npos) {
    return read_netpbm(path, bytes);
  }
  throw DataError("unsupported image format: " + path);
}

namespace {
void write_png_bytes(const std::string& path, int w, int h, png_uint_32 format, const void* data) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write " + path + ": " + img.message);
  }
}
}  // namespace

void write_png(const std::string& path, const GrayImage& image) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
  write_png_bytes(path, image.width, image.height, PNG_FORMAT_GRAY, bytes.data());
}

void write_png(const std::string& path, const RgbImage& image) {
  write_png_bytes(path, image.width, image.height, PNG_FORMAT_RGB, image.pixels.data());
}

}  // namespace glyphgan
