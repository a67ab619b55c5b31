#pragma once

// Coverage Rate with maximal-overlap search, global SSIM, output threshold
// calibration and quality tiers.

#include <cstdint>
#include <string>
#include <vector>

#include "glyphgan/data.hpp"

namespace glyphgan {

// Read-only binary image, 1 = ink.
struct BinaryView {
  const std::uint8_t* data = nullptr;
  int height = 0;
  int width = 0;
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

inline BinaryView view(const GlyphImage& g) { return {g.pixels.data(), g.size, g.size}; }

enum class CoverageMode {
  WhitePadded,  // ink shifted outside the overlap still counts
  OverlapOnly,  // counts only inside the intersection of the two frames
};

CoverageMode parse_coverage_mode(const std::string& name);
const char* coverage_mode_name(CoverageMode mode);

struct CoverageBreakdown {
  int n_valid = 0;
  int n_over = 0;  // black in generated, white in truth
  int n_less = 0;  // black in truth, white in generated
  int dy = 0;
  int dx = 0;
  double cr = 0;

  int numerator() const { return n_valid - n_over - n_less; }
};

// Generated is shifted by (dy, dx) over truth: generated pixel (y, x) lands on
// truth pixel (y + dy, x + dx). Throws DomainError when truth has no ink.
CoverageBreakdown coverage_at_offset(BinaryView generated, BinaryView truth, int dy, int dx,
                                     CoverageMode mode = CoverageMode::WhitePadded);

// Best offset in [-window, window]^2. Ties go to the smallest |dy| + |dx|,
// then to the first offset in row-major order (dy, then dx, ascending).
CoverageBreakdown coverage_rate_max(BinaryView generated, BinaryView truth, int window,
                                    CoverageMode mode = CoverageMode::WhitePadded);

int default_window(int image_size);  // image_size / 16

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
};

// Single SSIM over whole images with population statistics.
double ssim(const std::vector<double>& x, const std::vector<double>& y, const SsimParams& params = {});
double ssim(BinaryView x, BinaryView y, const SsimParams& params = {});

struct ThresholdResult {
  double threshold = 0;
  int count_above = 0;
  int deviation = 0;  // count_above - target; nonzero only through ties
};

// Midpoint between the target-th and next largest probability. When those
// two are tied the midpoint moves below the tied value, so every tied pixel
// is black and the deviation is the surplus.
ThresholdResult per_image_threshold(const std::vector<double>& probabilities, int n_valid_target);
double global_threshold(const std::vector<double>& per_image);
std::vector<std::uint8_t> apply_threshold(const std::vector<double>& probabilities, double threshold);

enum class QualityTier { High, Medium, Low };
const char* tier_name(QualityTier tier);

struct QualityThresholds {
  double cr_high = 0.3025;
  double ssim_high = 0.7591;
  double cr_low = 0.0;
  double ssim_low = 0.68;
  void validate() const;
};

QualityTier quality_tier(double cr, double ssim, const QualityThresholds& thresholds = {});

struct EvaluateOptions {
  int window = -1;  // -1 selects default_window(image size)
  CoverageMode mode = CoverageMode::WhitePadded;
  SsimParams ssim;
  QualityThresholds thresholds;
  double binarize_threshold = 0.5;
  CodepointFormat format = CodepointFormat::Auto;
};

struct MetricsRow {
  std::uint32_t codepoint = 0;
  CoverageBreakdown coverage;
  double ssim = 0;
  QualityTier tier = QualityTier::Medium;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // ascending codepoint
  double mean_cr = 0;
  double mean_ssim = 0;
  int high = 0;
  int medium = 0;
  int low = 0;
  int window = 0;
  CoverageMode mode = CoverageMode::WhitePadded;
  std::vector<std::uint32_t> generated_only;
  std::vector<std::uint32_t> truth_only;
  std::vector<std::uint32_t> skipped;  // truth without ink, CR undefined
};

MetricsReport evaluate_pairs(const std::vector<std::pair<GlyphImage, GlyphImage>>& generated_truth,
                             const EvaluateOptions& options);
// Matches files by codepoint; unmatched files are reported, an empty
// intersection is a data error.
MetricsReport evaluate_set(const std::string& generated_dir, const std::string& truth_dir,
                           const EvaluateOptions& options);

// codepoint,cr,dy,dx,n_valid,n_over,n_less,ssim,tier
std::string report_csv(const MetricsReport& report);
std::string report_table(const MetricsReport& report);

}  // namespace glyphgan
