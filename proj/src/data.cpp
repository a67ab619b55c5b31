#include "glyphgan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "glyphgan/errors.hpp"

namespace fs = std::filesystem;

namespace glyphgan {

GrayImage pad_to_square(const GrayImage& image) {
  if (image.width == image.height) return image;
  const int side = std::max(image.width, image.height);
  GrayImage out(side, side, 1.0f);
  const int oy = (side - image.height) / 2, ox = (side - image.width) / 2;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) out.at(y + oy, x + ox) = image.at(y, x);
  }
  return out;
}

namespace {

// Area-overlap weights mapping `in` samples onto `out` samples.
std::vector<std::vector<std::pair<int, double>>> area_weights(int in, int out) {
  std::vector<std::vector<std::pair<int, double>>> w(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(in, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

GrayImage resample(const GrayImage& image, int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("resample: target size must be positive");
  if (image.width == width && image.height == height) return image;
  const auto wx = area_weights(image.width, width);
  const auto wy = area_weights(image.height, height);
  GrayImage rows(width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0;
      for (auto [i, w] : wx[x]) acc += w * image.at(y, i);
      rows.at(y, x) = static_cast<float>(acc);
    }
  }
  GrayImage out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0;
      for (auto [i, w] : wy[y]) acc += w * rows.at(i, x);
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

GlyphImage binarize_glyph(const GrayImage& image, int image_size, double threshold) {
  if (image_size < 1) throw ConfigError("image_size must be positive");
  if (!(threshold > 0 && threshold <= 1)) throw ConfigError("binarize threshold must lie in (0, 1]");
  if (image.width <= 0 || image.height <= 0) throw DataError("empty image");
  const GrayImage square = resample(pad_to_square(image), image_size, image_size);
  GlyphImage g;
  g.size = image_size;
  g.pixels.resize(square.pixels.size());
  int ink = 0;
  for (std::size_t i = 0; i < square.pixels.size(); ++i) {
    g.pixels[i] = square.pixels[i] < threshold ? 1 : 0;
    ink += g.pixels[i];
  }
  g.empty = ink == 0;
  return g;
}

GlyphImage load_glyph(const std::string& path, int image_size, double threshold) {
  GlyphImage g = binarize_glyph(read_image(path), image_size, threshold);
  if (auto cp = parse_codepoint(fs::path(path).stem().string())) g.codepoint = *cp;
  return g;
}

void save_glyph(const std::string& path, const GlyphImage& glyph) {
  GrayImage img(glyph.size, glyph.size);
  for (std::size_t i = 0; i < glyph.pixels.size(); ++i) img.pixels[i] = glyph.pixels[i] ? 0.0f : 1.0f;
  write_png(path, img);
}

// ---------------------------------------------------------------------------
// Codepoints

namespace {

std::optional<std::uint32_t> parse_digits(const std::string& s, int base) {
  if (s.empty() || s.size() > 8) return std::nullopt;
  for (char c : s) {
    const bool ok = base == 10 ? std::isdigit(static_cast<unsigned char>(c)) != 0
                               : std::isxdigit(static_cast<unsigned char>(c)) != 0;
    if (!ok) return std::nullopt;
  }
  const unsigned long v = std::stoul(s, nullptr, base);
  if (v > 0x10FFFF) return std::nullopt;
  return static_cast<std::uint32_t>(v);
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

std::optional<std::uint32_t> parse_codepoint(const std::string& stem, CodepointFormat format) {
  switch (format) {
    case CodepointFormat::Decimal:
      return parse_digits(stem, 10);
    case CodepointFormat::Hex:
      for (const char* p : {"U+", "u+", "0x", "0X", "uni", "u"}) {
        if (starts_with(stem, p)) return parse_digits(stem.substr(std::string(p).size()), 16);
      }
      return parse_digits(stem, 16);
    case CodepointFormat::Auto:
      for (const char* p : {"U+", "u+", "0x", "0X", "uni", "u"}) {
        if (starts_with(stem, p)) return parse_digits(stem.substr(std::string(p).size()), 16);
      }
      return parse_digits(stem, 10);
  }
  return std::nullopt;
}

CodepointFormat parse_codepoint_format(const std::string& name) {
  if (name == "auto") return CodepointFormat::Auto;
  if (name == "decimal") return CodepointFormat::Decimal;
  if (name == "hex") return CodepointFormat::Hex;
  throw ConfigError("unknown codepoint format '" + name + "' (auto, decimal, hex)");
}

// ---------------------------------------------------------------------------
// Pairing

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::map<std::uint32_t, fs::path> index_dir(const std::string& dir, CodepointFormat format,
                                            std::vector<std::string>& ignored) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::uint32_t, fs::path> out;
  for (const auto& f : files) {
    const auto cp = parse_codepoint(f.stem().string(), format);
    if (!cp || !out.emplace(*cp, f).second) ignored.push_back(f.string());
  }
  return out;
}

}  // namespace

std::map<std::uint32_t, std::string> index_glyph_dir(const std::string& dir, CodepointFormat format,
                                                     std::vector<std::string>* ignored) {
  std::vector<std::string> skipped;
  std::map<std::uint32_t, std::string> out;
  for (const auto& [cp, path] : index_dir(dir, format, skipped)) out.emplace(cp, path.string());
  if (ignored) ignored->insert(ignored->end(), skipped.begin(), skipped.end());
  return out;
}

PairingReport make_pairs(const std::string& source_dir, const std::string& target_dir,
                         const PairingOptions& options) {
  PairingReport report;
  const auto src = index_dir(source_dir, options.format, report.ignored_files);
  const auto tgt = index_dir(target_dir, options.format, report.ignored_files);
  for (const auto& [cp, path] : src) {
    auto it = tgt.find(cp);
    if (it == tgt.end()) {
      report.source_only.push_back(cp);
      continue;
    }
    ImagePair pair;
    pair.source = binarize_glyph(read_image(path.string()), options.image_size, options.threshold);
    pair.target = binarize_glyph(read_image(it->second.string()), options.image_size, options.threshold);
    pair.source.codepoint = pair.target.codepoint = cp;
    pair.source.font = FontId::Source;
    pair.target.font = FontId::Target;
    if (pair.source.empty || pair.target.empty) report.empty_glyphs.push_back(cp);
    report.pairs.push_back(std::move(pair));
  }
  for (const auto& [cp, path] : tgt) {
    if (!src.count(cp)) report.target_only.push_back(cp);
  }
  if (report.pairs.empty()) {
    throw DataError("no codepoint appears in both " + source_dir + " and " + target_dir);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_dataset(const std::vector<std::uint32_t>& codepoints, const std::vector<int>& train_sizes,
                           int test_size, std::uint64_t seed,
                           const std::optional<std::vector<std::uint32_t>>& test_manifest) {
  std::vector<std::uint32_t> pool = codepoints;
  std::sort(pool.begin(), pool.end());
  if (std::adjacent_find(pool.begin(), pool.end()) != pool.end()) throw DataError("duplicate codepoints in pairs");
  for (int s : train_sizes) {
    if (s < 1) throw ConfigError("training set sizes must be >= 1");
  }
  const int largest = train_sizes.empty() ? 0 : *std::max_element(train_sizes.begin(), train_sizes.end());

  DatasetSplit split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  std::set<std::uint32_t> test;
  if (test_manifest) {
    for (std::uint32_t cp : *test_manifest) {
      if (!std::binary_search(pool.begin(), pool.end(), cp)) {
        throw DataError("test manifest codepoint " + std::to_string(cp) + " has no image pair");
      }
      test.insert(cp);
    }
  } else {
    if (test_size < 0) throw ConfigError("test size must be >= 0");
    if (static_cast<std::size_t>(test_size) + largest > pool.size()) {
      throw DataError("need " + std::to_string(test_size + largest) + " pairs (test " + std::to_string(test_size) +
                      " + train " + std::to_string(largest) + ") but only " + std::to_string(pool.size()) +
                      " available, short by " + std::to_string(test_size + largest - pool.size()));
    }
    std::vector<std::uint32_t> order = pool;
    std::shuffle(order.begin(), order.end(), rng);
    test.insert(order.begin(), order.begin() + test_size);
  }
  split.test.assign(test.begin(), test.end());

  std::vector<std::uint32_t> rest;
  for (std::uint32_t cp : pool) {
    if (!test.count(cp)) rest.push_back(cp);
  }
  if (static_cast<std::size_t>(largest) > rest.size()) {
    throw DataError("need " + std::to_string(largest) + " training pairs outside the test set but only " +
                    std::to_string(rest.size()) + " remain, short by " + std::to_string(largest - rest.size()));
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (int s : train_sizes) split.train[s] = std::vector<std::uint32_t>(rest.begin(), rest.begin() + s);
  return split;
}

std::string format_manifest(const DatasetSplit& split) {
  std::ostringstream out;
  out << "# glyph pair split; one decimal codepoint per line\n";
  out << "seed=" << split.seed << "\n";
  out << "[test]\n";
  for (auto cp : split.test) out << cp << "\n";
  for (const auto& [size, cps] : split.train) {
    out << "[train_" << size << "]\n";
    for (auto cp : cps) out << cp << "\n";
  }
  return out.str();
}

DatasetSplit parse_manifest(const std::string& text) {
  DatasetSplit split;
  std::istringstream in(text);
  std::string line;
  std::vector<std::uint32_t>* section = nullptr;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError("manifest line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line == "[test]") {
        section = &split.test;
      } else if (starts_with(line, "[train_") && line.back() == ']') {
        const auto size = parse_digits(line.substr(7, line.size() - 8), 10);
        if (!size) fail("bad section " + line);
        section = &split.train[static_cast<int>(*size)];
      } else {
        fail("unknown section " + line);
      }
    } else if (starts_with(line, "seed=")) {
      try {
        split.seed = std::stoull(line.substr(5));
      } catch (const std::exception&) {
        fail("bad seed");
      }
    } else {
      const auto cp = parse_digits(line, 10);
      if (!cp || !section) fail("expected a codepoint inside a section, got '" + line + "'");
      section->push_back(*cp);
    }
  }
  return split;
}

void write_manifest(const std::string& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << format_manifest(split);
}

DatasetSplit read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::vector<std::uint32_t> read_codepoint_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read codepoint list " + path);
  std::vector<std::uint32_t> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty() || line.front() == '[') continue;
    const auto cp = parse_codepoint(line);
    if (!cp) throw DataError(path + ":" + std::to_string(line_no) + ": not a codepoint: " + line);
    out.push_back(*cp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

int default_jitter_size(int image_size) {
  return static_cast<int>(std::lround(image_size * 307.0 / 256.0));
}

namespace {
GlyphImage upscale_crop(const GlyphImage& g, int jitter, int dy, int dx) {
  GlyphImage out = g;
  const int s = g.size;
  for (int y = 0; y < s; ++y) {
    const int sy = static_cast<int>(static_cast<long>(y + dy) * s / jitter);
    for (int x = 0; x < s; ++x) {
      const int sx = static_cast<int>(static_cast<long>(x + dx) * s / jitter);
      out.pixels[static_cast<std::size_t>(y) * s + x] = g.at(sy, sx);
    }
  }
  return out;
}
}  // namespace

ImagePair augment_pair(const ImagePair& pair, int jitter_size, std::mt19937_64& rng, CropOffset* offset) {
  const int s = pair.source.size;
  if (pair.target.size != s) throw DimensionError("augment_pair: source and target sizes differ");
  if (jitter_size <= s) {
    throw ConfigError("jitter size " + std::to_string(jitter_size) + " must exceed image size " + std::to_string(s));
  }
  std::uniform_int_distribution<int> pick(0, jitter_size - s);
  CropOffset o;
  o.dy = pick(rng);
  o.dx = pick(rng);
  if (offset) *offset = o;
  ImagePair out;
  out.source = upscale_crop(pair.source, jitter_size, o.dy, o.dx);
  out.target = upscale_crop(pair.target, jitter_size, o.dy, o.dx);
  return out;
}

int count_valid(const GlyphImage& glyph) {
  int n = 0;
  for (auto v : glyph.pixels) {
    if (v > 1) throw DomainError("count_valid: glyph is not binary");
    n += v;
  }
  return n;
}

int count_valid(const std::vector<float>& binary) {
  int n = 0;
  for (float v : binary) {
    if (v != 0.0f && v != 1.0f) throw DomainError("count_valid: image is not binary");
    n += v == 1.0f;
  }
  return n;
}

template <typename T>
Tensor<T> glyph_batch(const std::vector<const GlyphImage*>& glyphs) {
  if (glyphs.empty()) throw DimensionError("glyph_batch: empty batch");
  const std::size_t s = static_cast<std::size_t>(glyphs.front()->size);
  Tensor<T> t({glyphs.size(), 1, s, s});
  auto d = t.data();
  for (std::size_t n = 0; n < glyphs.size(); ++n) {
    if (static_cast<std::size_t>(glyphs[n]->size) != s) throw DimensionError("glyph_batch: mixed glyph sizes");
    for (std::size_t i = 0; i < s * s; ++i) d[n * s * s + i] = static_cast<T>(glyphs[n]->pixels[i]);
  }
  return t;
}

template Tensor<float> glyph_batch<float>(const std::vector<const GlyphImage*>&);
template Tensor<double> glyph_batch<double>(const std::vector<const GlyphImage*>&);

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct Canvas {
  int size;
  GrayImage img;
  explicit Canvas(int s) : size(s), img(s, s, 1.0f) {}

  void stamp(double cy, double cx, double radius) {
    const int r = static_cast<int>(std::ceil(radius));
    for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y) {
      for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
        if (y < 0 || x < 0 || y >= size || x >= size) continue;
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) img.at(y, x) = 0.0f;
      }
    }
  }

  void line(double y0, double x0, double y1, double x1, double radius) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)) * 2)) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      stamp(y0 + t * (y1 - y0), x0 + t * (x1 - x0), radius);
    }
  }
};

struct Stroke {
  double y0, x0, y1, x1;
};

}  // namespace

void write_synthetic_fixtures(const std::string& dir, const FixtureOptions& options) {
  if (options.count < 1) throw ConfigError("fixture count must be >= 1");
  if (options.image_size < 16) throw ConfigError("fixture image size must be >= 16");
  const fs::path root(dir);
  fs::create_directories(root / "source");
  fs::create_directories(root / "target");
  const int s = options.image_size;
  const double lo = s * 0.15, hi = s * 0.8;
  for (int k = 0; k < options.count; ++k) {
    std::mt19937_64 rng(options.seed * 1000003ULL + static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> coord(lo, hi);
    std::uniform_int_distribution<int> kind(0, 3);
    std::vector<Stroke> strokes;
    const int n = 2 + k % 3;
    for (int i = 0; i < n; ++i) {
      const double a = coord(rng), b = coord(rng), c = coord(rng);
      switch (kind(rng)) {
        case 0: strokes.push_back({a, b, a, c}); break;  // horizontal
        case 1: strokes.push_back({b, a, c, a}); break;  // vertical
        case 2: strokes.push_back({a, b, c, b + (c - a) * 0.6}); break;  // slanted
        default: strokes.push_back({a, c, b, c - (b - a) * 0.4}); break;
      }
    }
    Canvas src(s), tgt(s);
    const double shift = s / 32.0;
    for (const auto& st : strokes) {
      src.line(st.y0, st.x0, st.y1, st.x1, s / 40.0);
      // Calligraphic variant: heavier, shifted, with the stroke end flared.
      tgt.line(st.y0 + shift, st.x0 + shift, st.y1 + shift, st.x1 + shift, s / 16.0);
      tgt.stamp(st.y1 + shift, st.x1 + shift, s / 11.0);
    }
    const std::string name = std::to_string(0x4E00 + k) + ".png";
    write_png((root / "source" / name).string(), src.img);
    write_png((root / "target" / name).string(), tgt.img);
  }
}

}  // namespace glyphgan
