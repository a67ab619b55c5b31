#pragma once

// Glyph loading, pairing, splitting and the resize-then-crop augmentation.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glyphgan/image.hpp"
#include "glyphgan/tensor.hpp"

namespace glyphgan {

enum class FontId { Source, Target };

// Binarized square glyph: 1 = black ink ("valid"), 0 = white background.
struct GlyphImage {
  int size = 0;
  std::vector<std::uint8_t> pixels;
  std::uint32_t codepoint = 0;
  FontId font = FontId::Source;
  bool empty = false;  // no ink after binarization

  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * size + x]; }
};

struct ImagePair {
  GlyphImage source;
  GlyphImage target;
  std::uint32_t codepoint() const { return source.codepoint; }
};

// Pads to a white square (centered), resamples to image_size x image_size by
// area averaging, then marks pixel = 1 iff luminance < threshold * 1.0 (the
// maximum representable luminance).
GlyphImage binarize_glyph(const GrayImage& image, int image_size, double threshold);
GlyphImage load_glyph(const std::string& path, int image_size, double threshold);

GrayImage pad_to_square(const GrayImage& image);
GrayImage resample(const GrayImage& image, int width, int height);

// Writes a binary glyph as a black-on-white PNG.
void save_glyph(const std::string& path, const GlyphImage& glyph);

enum class CodepointFormat { Auto, Decimal, Hex };

// Codepoint from a file stem. Auto accepts plain decimal digits, or hex with
// a "U+", "u+", "0x", "uni" or "u" prefix. Hex accepts bare hex digits too.
std::optional<std::uint32_t> parse_codepoint(const std::string& stem, CodepointFormat format = CodepointFormat::Auto);
CodepointFormat parse_codepoint_format(const std::string& name);

struct PairingReport {
  std::vector<ImagePair> pairs;  // ascending codepoint
  std::vector<std::uint32_t> source_only;
  std::vector<std::uint32_t> target_only;
  std::vector<std::string> ignored_files;  // no codepoint in the name, or a duplicate
  std::vector<std::uint32_t> empty_glyphs;  // paired but without ink on one side
};

struct PairingOptions {
  int image_size = 32;
  double threshold = 0.5;
  CodepointFormat format = CodepointFormat::Auto;
};

// Image files in dir keyed by codepoint. Files without a codepoint in the
// name, and later duplicates, go to `ignored`. Missing dir: ConfigError.
std::map<std::uint32_t, std::string> index_glyph_dir(const std::string& dir, CodepointFormat format = CodepointFormat::Auto,
                                                     std::vector<std::string>* ignored = nullptr);

// One pair per codepoint present in both directories. Missing directories are
// config errors, an empty intersection is a data error.
PairingReport make_pairs(const std::string& source_dir, const std::string& target_dir, const PairingOptions& options);

// Test set plus one training set per requested size. Training sets are nested
// prefixes of one seeded permutation of the non-test pairs.
struct DatasetSplit {
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> test;
  std::map<int, std::vector<std::uint32_t>> train;  // size -> codepoints
};

DatasetSplit split_dataset(const std::vector<std::uint32_t>& codepoints, const std::vector<int>& train_sizes,
                           int test_size, std::uint64_t seed,
                           const std::optional<std::vector<std::uint32_t>>& test_manifest = std::nullopt);

// "seed=N", then "[test]" and "[train_<size>]" sections with one decimal
// codepoint per line. '#' starts a comment.
std::string format_manifest(const DatasetSplit& split);
DatasetSplit parse_manifest(const std::string& text);
void write_manifest(const std::string& path, const DatasetSplit& split);
DatasetSplit read_manifest(const std::string& path);

// Plain codepoint list (one per line) used to pin a curated test set.
std::vector<std::uint32_t> read_codepoint_list(const std::string& path);

int default_jitter_size(int image_size);  // round(image_size * 307 / 256)

struct CropOffset {
  int dy = 0;
  int dx = 0;
};

// Nearest-neighbor upscale of both glyphs to jitter_size, then a crop back to
// the original size at one shared offset drawn uniformly from [0, jitter-size]^2.
ImagePair augment_pair(const ImagePair& pair, int jitter_size, std::mt19937_64& rng, CropOffset* offset = nullptr);

int count_valid(const GlyphImage& glyph);
// Throws DomainError if any value is not exactly 0 or 1.
int count_valid(const std::vector<float>& binary);

// [N,1,S,S] tensor with ink = 1.
template <typename T>
Tensor<T> glyph_batch(const std::vector<const GlyphImage*>& glyphs);

// Deterministic toy corpus: `count` glyphs per font built from stroke
// primitives. Target glyphs use thicker, shifted strokes. Files are named by
// decimal codepoint starting at U+4E00.
struct FixtureOptions {
  int count = 48;
  int image_size = 64;
  std::uint64_t seed = 7;
};
void write_synthetic_fixtures(const std::string& dir, const FixtureOptions& options);

}  // namespace glyphgan
