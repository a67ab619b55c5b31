#include "glyphgan/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "glyphgan/errors.hpp"
#include "glyphgan/parallel.hpp"

namespace fs = std::filesystem;

namespace glyphgan {

CoverageMode parse_coverage_mode(const std::string& name) {
  if (name == "white-padded" || name == "white_padded") return CoverageMode::WhitePadded;
  if (name == "overlap-only" || name == "overlap_only") return CoverageMode::OverlapOnly;
  throw ConfigError("unknown coverage mode '" + name + "' (white-padded, overlap-only)");
}

const char* coverage_mode_name(CoverageMode mode) {
  return mode == CoverageMode::WhitePadded ? "white-padded" : "overlap-only";
}

namespace {

void require_same_dims(BinaryView a, BinaryView b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(op) + ": image sizes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
  if (a.height <= 0 || a.width <= 0) throw DimensionError(std::string(op) + ": empty image");
}

int ink(BinaryView v) {
  int n = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(v.height) * v.width; ++i) n += v.data[i] != 0;
  return n;
}

CoverageBreakdown finish(int n_valid, int n_over, int n_less, int dy, int dx) {
  CoverageBreakdown b;
  b.n_valid = n_valid;
  b.n_over = n_over;
  b.n_less = n_less;
  b.dy = dy;
  b.dx = dx;
  b.cr = static_cast<double>(n_valid - n_over - n_less) / n_valid;
  return b;
}

}  // namespace

CoverageBreakdown coverage_at_offset(BinaryView generated, BinaryView truth, int dy, int dx, CoverageMode mode) {
  require_same_dims(generated, truth, "coverage");
  const int n_valid = ink(truth);
  if (n_valid == 0) throw DomainError("coverage: truth image has no valid pixels, CR is undefined");
  const int h = truth.height, w = truth.width;
  int over = 0, less = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int gy = y - dy, gx = x - dx;
      const bool inside = gy >= 0 && gy < h && gx >= 0 && gx < w;
      if (mode == CoverageMode::OverlapOnly && !inside) continue;
      const bool g = inside && generated.at(gy, gx);
      const bool t = truth.at(y, x);
      over += g && !t;
      less += t && !g;
    }
  }
  if (mode == CoverageMode::WhitePadded) {
    // Generated ink shifted off the truth frame lands on white.
    for (int gy = 0; gy < h; ++gy) {
      for (int gx = 0; gx < w; ++gx) {
        const int y = gy + dy, x = gx + dx;
        if ((y < 0 || y >= h || x < 0 || x >= w) && generated.at(gy, gx)) ++over;
      }
    }
  }
  return finish(n_valid, over, less, dy, dx);
}

namespace {

using Row = std::vector<std::uint64_t>;

std::vector<Row> pack_rows(BinaryView v) {
  const std::size_t words = (static_cast<std::size_t>(v.width) + 63) / 64;
  std::vector<Row> rows(v.height, Row(words, 0));
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      if (v.at(y, x)) rows[y][x / 64] |= std::uint64_t{1} << (x % 64);
    }
  }
  return rows;
}

// Bit x of the result is bit (x - dx) of `row`, restricted to [0, width).
Row shift_row(const Row& row, int dx, int width) {
  Row out(row.size(), 0);
  for (int x = std::max(0, dx); x < std::min(width, width + dx); ++x) {
    const int src = x - dx;
    if ((row[src / 64] >> (src % 64)) & 1U) out[x / 64] |= std::uint64_t{1} << (x % 64);
  }
  return out;
}

// Inclusive-exclusive rectangle sums over a binary image.
class Integral {
 public:
  explicit Integral(BinaryView v) : w_(v.width + 1), sums_(static_cast<std::size_t>(v.height + 1) * (v.width + 1), 0) {
    for (int y = 0; y < v.height; ++y) {
      for (int x = 0; x < v.width; ++x) {
        at(y + 1, x + 1) = at(y, x + 1) + at(y + 1, x) - at(y, x) + (v.at(y, x) ? 1 : 0);
      }
    }
  }
  int rect(int y0, int y1, int x0, int x1) const {
    if (y0 >= y1 || x0 >= x1) return 0;
    return get(y1, x1) - get(y0, x1) - get(y1, x0) + get(y0, x0);
  }

 private:
  int& at(int y, int x) { return sums_[static_cast<std::size_t>(y) * w_ + x]; }
  int get(int y, int x) const { return sums_[static_cast<std::size_t>(y) * w_ + x]; }
  int w_;
  std::vector<int> sums_;
};

}  // namespace

CoverageBreakdown coverage_rate_max(BinaryView generated, BinaryView truth, int window, CoverageMode mode) {
  require_same_dims(generated, truth, "coverage");
  if (window < 0) throw ConfigError("coverage window must be >= 0");
  const int n_valid = ink(truth);
  if (n_valid == 0) throw DomainError("coverage: truth image has no valid pixels, CR is undefined");
  const int h = truth.height, w = truth.width;
  const int gen_ink = ink(generated);
  const auto t_rows = pack_rows(truth);
  const auto g_rows = pack_rows(generated);
  const Integral t_sum(truth), g_sum(generated);

  bool have = false;
  int best_num = 0, best_l1 = 0, best_over = 0, best_less = 0, best_dy = 0, best_dx = 0;
  std::vector<std::vector<Row>> shifted(2 * static_cast<std::size_t>(window) + 1);
  for (int dx = -window; dx <= window; ++dx) {
    auto& s = shifted[dx + window];
    s.reserve(h);
    for (int y = 0; y < h; ++y) s.push_back(shift_row(g_rows[y], dx, w));
  }
  for (int dy = -window; dy <= window; ++dy) {
    for (int dx = -window; dx <= window; ++dx) {
      const auto& gs = shifted[dx + window];
      int overlap = 0;
      for (int y = std::max(0, dy); y < std::min(h, h + dy); ++y) {
        const Row& t = t_rows[y];
        const Row& g = gs[y - dy];
        for (std::size_t k = 0; k < t.size(); ++k) overlap += std::popcount(t[k] & g[k]);
      }
      int over, less;
      if (mode == CoverageMode::WhitePadded) {
        over = gen_ink - overlap;
        less = n_valid - overlap;
      } else {
        const int y0 = std::max(0, dy), y1 = std::min(h, h + dy);
        const int x0 = std::max(0, dx), x1 = std::min(w, w + dx);
        over = g_sum.rect(y0 - dy, y1 - dy, x0 - dx, x1 - dx) - overlap;
        less = t_sum.rect(y0, y1, x0, x1) - overlap;
      }
      const int num = n_valid - over - less;
      const int l1 = std::abs(dy) + std::abs(dx);
      if (!have || num > best_num || (num == best_num && l1 < best_l1)) {
        have = true;
        best_num = num;
        best_l1 = l1;
        best_over = over;
        best_less = less;
        best_dy = dy;
        best_dx = dx;
      }
    }
  }
  return finish(n_valid, best_over, best_less, best_dy, best_dx);
}

int default_window(int image_size) { return image_size / 16; }

// ---------------------------------------------------------------------------
// SSIM

void SsimParams::validate() const {
  if (!(c1() > 0) || !(c2() > 0)) throw ConfigError("SSIM constants must be positive (k1, k2, dynamic range > 0)");
}

double ssim(const std::vector<double>& x, const std::vector<double>& y, const SsimParams& params) {
  params.validate();
  if (x.size() != y.size()) throw DimensionError("ssim: images differ in size");
  if (x.size() < 2) throw DimensionError("ssim: need at least 2 pixels");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] - mx, b = y[i] - my;
    vx += a * a;
    vy += b * b;
    cxy += a * b;
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const double c1 = params.c1(), c2 = params.c2();
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double ssim(BinaryView x, BinaryView y, const SsimParams& params) {
  require_same_dims(x, y, "ssim");
  const std::size_t n = static_cast<std::size_t>(x.height) * x.width;
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = x.data[i] ? 1.0 : 0.0;
    b[i] = y.data[i] ? 1.0 : 0.0;
  }
  return ssim(a, b, params);
}

// ---------------------------------------------------------------------------
// Thresholds

ThresholdResult per_image_threshold(const std::vector<double>& probabilities, int n_valid_target) {
  const int count = static_cast<int>(probabilities.size());
  if (n_valid_target < 1 || n_valid_target > count) {
    throw DomainError("per_image_threshold: target " + std::to_string(n_valid_target) + " outside [1, " +
                      std::to_string(count) + "]");
  }
  std::vector<double> sorted = probabilities;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double v = sorted[n_valid_target - 1];
  double below = 0;  // next distinct value under v, 0 when none
  for (int i = n_valid_target; i < count; ++i) {
    if (sorted[i] < v) {
      below = sorted[i];
      break;
    }
  }
  ThresholdResult r;
  r.threshold = (v + below) / 2;
  r.count_above = static_cast<int>(std::count_if(probabilities.begin(), probabilities.end(),
                                                 [&](double p) { return p > r.threshold; }));
  r.deviation = r.count_above - n_valid_target;
  return r;
}

double global_threshold(const std::vector<double>& per_image) {
  if (per_image.empty()) throw DomainError("global_threshold: no per-image thresholds");
  double acc = 0;
  for (double t : per_image) acc += t;
  return acc / static_cast<double>(per_image.size());
}

std::vector<std::uint8_t> apply_threshold(const std::vector<double>& probabilities, double threshold) {
  if (!(threshold > 0 && threshold < 1)) throw DomainError("apply_threshold: threshold must lie in (0, 1)");
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probabilities[i] > threshold ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Tiers

const char* tier_name(QualityTier tier) {
  switch (tier) {
    case QualityTier::High: return "high";
    case QualityTier::Medium: return "medium";
    case QualityTier::Low: return "low";
  }
  return "medium";
}

void QualityThresholds::validate() const {
  if (!(cr_low < cr_high)) throw ConfigError("quality thresholds need cr_low < cr_high");
  if (!(ssim_low < ssim_high)) throw ConfigError("quality thresholds need ssim_low < ssim_high");
}

QualityTier quality_tier(double cr, double ssim_value, const QualityThresholds& t) {
  t.validate();
  if (cr > t.cr_high && ssim_value > t.ssim_high) return QualityTier::High;
  if (cr < t.cr_low && ssim_value < t.ssim_low) return QualityTier::Low;
  return QualityTier::Medium;
}

// ---------------------------------------------------------------------------
// Reports

MetricsReport evaluate_pairs(const std::vector<std::pair<GlyphImage, GlyphImage>>& generated_truth,
                             const EvaluateOptions& options) {
  options.ssim.validate();
  options.thresholds.validate();
  MetricsReport report;
  report.mode = options.mode;
  if (generated_truth.empty()) throw DataError("evaluate: no image pairs");
  const int size = generated_truth.front().second.size;
  report.window = options.window >= 0 ? options.window : default_window(size);

  std::vector<MetricsRow> rows(generated_truth.size());
  std::vector<char> valid(generated_truth.size(), 0);
  parallel_for(generated_truth.size(), [&](std::size_t i) {
    const auto& [gen, truth] = generated_truth[i];
    MetricsRow& row = rows[i];
    row.codepoint = truth.codepoint;
    if (count_valid(truth) == 0) return;
    row.coverage = coverage_rate_max(view(gen), view(truth), report.window, options.mode);
    row.ssim = ssim(view(gen), view(truth), options.ssim);
    row.tier = quality_tier(row.coverage.cr, row.ssim, options.thresholds);
    valid[i] = 1;
  });
  double cr_sum = 0, ssim_sum = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!valid[i]) {
      report.skipped.push_back(rows[i].codepoint);
      continue;
    }
    const MetricsRow& row = rows[i];
    cr_sum += row.coverage.cr;
    ssim_sum += row.ssim;
    (row.tier == QualityTier::High ? report.high : row.tier == QualityTier::Low ? report.low : report.medium)++;
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) {
    report.mean_cr = cr_sum / static_cast<double>(report.rows.size());
    report.mean_ssim = ssim_sum / static_cast<double>(report.rows.size());
  }
  return report;
}

namespace {

std::map<std::uint32_t, fs::path> image_index(const std::string& dir, CodepointFormat format) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::uint32_t, fs::path> out;
  for (const auto& f : files) {
    if (auto cp = parse_codepoint(f.stem().string(), format)) out.emplace(*cp, f);
  }
  return out;
}

}  // namespace

MetricsReport evaluate_set(const std::string& generated_dir, const std::string& truth_dir,
                           const EvaluateOptions& options) {
  const auto gen = image_index(generated_dir, options.format);
  const auto truth = image_index(truth_dir, options.format);
  std::vector<std::pair<GlyphImage, GlyphImage>> pairs;
  std::vector<std::uint32_t> gen_only, truth_only;
  for (const auto& [cp, path] : gen) {
    auto it = truth.find(cp);
    if (it == truth.end()) {
      gen_only.push_back(cp);
      continue;
    }
    const GrayImage truth_img = read_image(it->second.string());
    const int size = std::max(truth_img.width, truth_img.height);
    GlyphImage t = binarize_glyph(truth_img, size, options.binarize_threshold);
    GlyphImage g = binarize_glyph(read_image(path.string()), size, options.binarize_threshold);
    t.codepoint = g.codepoint = cp;
    pairs.emplace_back(std::move(g), std::move(t));
  }
  for (const auto& [cp, path] : truth) {
    if (!gen.count(cp)) truth_only.push_back(cp);
  }
  if (pairs.empty()) {
    throw DataError("no codepoint appears in both " + generated_dir + " and " + truth_dir);
  }
  MetricsReport report = evaluate_pairs(pairs, options);
  report.generated_only = std::move(gen_only);
  report.truth_only = std::move(truth_only);
  return report;
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "codepoint,cr,dy,dx,n_valid,n_over,n_less,ssim,tier\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%u,%.17g,%d,%d,%d,%d,%d,%.17g,%s\n", r.codepoint, r.coverage.cr, r.coverage.dy,
                  r.coverage.dx, r.coverage.n_valid, r.coverage.n_over, r.coverage.n_less, r.ssim, tier_name(r.tier));
    out << buf;
  }
  return out.str();
}

std::string report_table(const MetricsReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %8s %4s %4s %7s %6s %6s %8s  %s\n", "codepoint", "CR", "dy", "dx", "valid",
                "over", "less", "SSIM", "tier");
  out << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "U+%-8X %8.4f %4d %4d %7d %6d %6d %8.4f  %s\n", r.codepoint, r.coverage.cr,
                  r.coverage.dy, r.coverage.dx, r.coverage.n_valid, r.coverage.n_over, r.coverage.n_less, r.ssim,
                  tier_name(r.tier));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "\nimages %zu  mean CR %.4f  mean SSIM %.4f  high %d  medium %d  low %d\n",
                report.rows.size(), report.mean_cr, report.mean_ssim, report.high, report.medium, report.low);
  out << buf;
  std::snprintf(buf, sizeof buf, "window +-%d  mode %s\n", report.window, coverage_mode_name(report.mode));
  out << buf;
  if (!report.generated_only.empty() || !report.truth_only.empty()) {
    out << "unmatched: " << report.generated_only.size() << " generated-only, " << report.truth_only.size()
        << " truth-only\n";
  }
  if (!report.skipped.empty()) out << "skipped (truth without ink): " << report.skipped.size() << "\n";
  return out.str();
}

}  // namespace glyphgan
