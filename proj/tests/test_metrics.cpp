#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "glyphgan/errors.hpp"
#include "glyphgan/metrics.hpp"
#include "test_util.hpp"

using namespace glyphgan;
using glyphgan::testing::TempDir;

namespace fs = std::filesystem;

namespace {

struct Img {
  int h, w;
  std::vector<std::uint8_t> px;
  Img(int h_, int w_) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, 0) {}
  std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t get(int y, int x) const {
    return y >= 0 && y < h && x >= 0 && x < w ? px[static_cast<std::size_t>(y) * w + x] : 0;
  }
  BinaryView v() const { return {px.data(), h, w}; }
};

Img random_img(int s, std::mt19937_64& rng, double p) {
  Img im(s, s);
  std::bernoulli_distribution ink(p);
  for (auto& v : im.px) v = ink(rng);
  return im;
}

Img block(int s, int y0, int x0, int n) {
  Img im(s, s);
  for (int y = y0; y < y0 + n; ++y) {
    for (int x = x0; x < x0 + n; ++x) im.at(y, x) = 1;
  }
  return im;
}

// Oracle: paint both images on a canvas large enough to hold every shift and
// count pixel classes directly.
struct Counts {
  int valid, over, less;
};

Counts oracle_counts(const Img& gen, const Img& truth, int dy, int dx, bool overlap_only) {
  Counts c{0, 0, 0};
  for (int y = 0; y < truth.h; ++y) {
    for (int x = 0; x < truth.w; ++x) c.valid += truth.get(y, x);
  }
  const int pad = std::max(std::abs(dy), std::abs(dx)) + 1;
  for (int y = -pad; y < truth.h + pad; ++y) {
    for (int x = -pad; x < truth.w + pad; ++x) {
      const bool in_truth = y >= 0 && y < truth.h && x >= 0 && x < truth.w;
      const bool in_gen = y - dy >= 0 && y - dy < gen.h && x - dx >= 0 && x - dx < gen.w;
      if (overlap_only && !(in_truth && in_gen)) continue;
      const int g = gen.get(y - dy, x - dx), t = truth.get(y, x);
      c.over += g && !t;
      c.less += t && !g;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("coverage hand cases") {
  const Img a = block(6, 1, 1, 2);
  auto id = coverage_at_offset(a.v(), a.v(), 0, 0);
  CHECK(id.n_over == 0);
  CHECK(id.n_less == 0);
  CHECK(id.cr == 1.0);

  const Img white(6, 6);
  auto blank = coverage_at_offset(white.v(), a.v(), 0, 0);
  CHECK(blank.n_less == 4);
  CHECK(blank.cr == 0.0);

  const Img big = block(6, 1, 1, 3);
  auto sup = coverage_at_offset(big.v(), a.v(), 0, 0);
  CHECK(sup.n_valid == 4);
  CHECK(sup.n_over == 5);
  CHECK(sup.n_less == 0);
  CHECK(sup.cr == -0.25);

  CHECK_THROWS_AS(coverage_at_offset(a.v(), white.v(), 0, 0), DomainError);
  const Img other(5, 5);
  CHECK_THROWS_AS(coverage_at_offset(a.v(), other.v(), 0, 0), DimensionError);
}

TEST_CASE("translated block is recovered at the inverse offset") {
  const Img truth = block(8, 0, 0, 3);
  const Img gen = block(8, 2, 1, 3);
  for (CoverageMode mode : {CoverageMode::WhitePadded, CoverageMode::OverlapOnly}) {
    auto best = coverage_rate_max(gen.v(), truth.v(), 4, mode);
    CHECK(best.cr == 1.0);
    CHECK(best.dy == -2);
    CHECK(best.dx == -1);
  }
}

TEST_CASE("window 0 equals the zero offset and identity is 1 for any window") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    Img g = random_img(12, rng, 0.3), tr = random_img(12, rng, 0.3);
    tr.at(0, 0) = 1;
    auto a = coverage_rate_max(g.v(), tr.v(), 0);
    auto b = coverage_at_offset(g.v(), tr.v(), 0, 0);
    CHECK(a.n_over == b.n_over);
    CHECK(a.n_less == b.n_less);
    CHECK(a.cr == b.cr);
    for (int w : {0, 1, 3, 6}) {
      auto s = coverage_rate_max(tr.v(), tr.v(), w);
      CHECK(s.cr == 1.0);
      CHECK(s.dy == 0);
      CHECK(s.dx == 0);
    }
  }
}

TEST_CASE("white-padded mode counts ink pushed off the frame") {
  const Img truth = block(6, 0, 0, 2);
  const Img gen = block(6, 0, 0, 2);
  auto shifted = coverage_at_offset(gen.v(), truth.v(), -1, 0);
  CHECK(shifted.n_over == 2);  // top row of the block leaves the frame
  CHECK(shifted.n_less == 2);
  auto literal = coverage_at_offset(gen.v(), truth.v(), -1, 0, CoverageMode::OverlapOnly);
  CHECK(literal.n_over == 0);
  CHECK(literal.n_less == 2);
}

TEST_CASE("max search matches exhaustive brute force on random pairs") {
  std::mt19937_64 rng(2024);
  const int window = 4;
  for (bool overlap_only : {false, true}) {
    const CoverageMode mode = overlap_only ? CoverageMode::OverlapOnly : CoverageMode::WhitePadded;
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_real_distribution<double> density(0.05, 0.6);
      Img gen = random_img(16, rng, density(rng));
      Img truth = random_img(16, rng, density(rng));
      truth.at(8, 8) = 1;
      int best_num = 0, best_l1 = 0, by = 0, bx = 0;
      Counts best{};
      bool have = false;
      for (int dy = -window; dy <= window; ++dy) {
        for (int dx = -window; dx <= window; ++dx) {
          const Counts c = oracle_counts(gen, truth, dy, dx, overlap_only);
          const int num = c.valid - c.over - c.less, l1 = std::abs(dy) + std::abs(dx);
          if (!have || num > best_num || (num == best_num && l1 < best_l1)) {
            have = true;
            best_num = num;
            best_l1 = l1;
            best = c;
            by = dy;
            bx = dx;
          }
          const auto direct = coverage_at_offset(gen.v(), truth.v(), dy, dx, mode);
          REQUIRE(direct.n_over == c.over);
          REQUIRE(direct.n_less == c.less);
        }
      }
      const auto fast = coverage_rate_max(gen.v(), truth.v(), window, mode);
      CHECK(fast.n_valid == best.valid);
      CHECK(fast.n_over == best.over);
      CHECK(fast.n_less == best.less);
      CHECK(fast.dy == by);
      CHECK(fast.dx == bx);
      CHECK(fast.cr == static_cast<double>(best_num) / best.valid);
    }
  }
}

TEST_CASE("ties prefer the smallest shift, then row-major order") {
  // A single truth pixel and a generated image with ink at two equidistant
  // places: both offsets give the same count.
  Img truth(9, 9), gen(9, 9);
  truth.at(4, 4) = 1;
  gen.at(4, 2) = 1;  // matches at (0, +2)
  gen.at(2, 4) = 1;  // matches at (+2, 0)
  auto best = coverage_rate_max(gen.v(), truth.v(), 3);
  CHECK(best.dy == 0);
  CHECK(best.dx == 2);
  gen.at(6, 4) = 1;  // matches at (-2, 0), row-major first among |d| = 2
  best = coverage_rate_max(gen.v(), truth.v(), 3, CoverageMode::OverlapOnly);
  CHECK(best.dy == -2);
  CHECK(best.dx == 0);
}

TEST_CASE("CR properties: bounds and translation invariance") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Img truth(20, 20);
    std::uniform_int_distribution<int> pos(5, 13);
    for (int k = 0; k < 12; ++k) truth.at(pos(rng), pos(rng)) = 1;
    const auto base = coverage_rate_max(truth.v(), truth.v(), 3);
    CHECK(base.cr <= 1.0);
    std::uniform_int_distribution<int> shift(-3, 3);
    const int sy = shift(rng), sx = shift(rng);
    Img moved(20, 20);
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) moved.at(y, x) = truth.get(y - sy, x - sx);
    }
    const auto found = coverage_rate_max(moved.v(), truth.v(), 3);
    CHECK(found.cr == base.cr);
    CHECK(found.cr == 1.0);

    Img noise = random_img(20, rng, 0.2);
    const auto r = coverage_rate_max(noise.v(), truth.v(), 3);
    CHECK(r.cr <= 1.0);
    CHECK(r.cr == static_cast<double>(r.n_valid - r.n_over - r.n_less) / r.n_valid);
  }
}

TEST_CASE("ssim identity, symmetry, constants and range") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(64), y(64);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-12);
    CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-12);
    const double s = ssim(x, y);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    std::vector<std::size_t> perm(64);
    for (std::size_t i = 0; i < 64; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> px(64), py(64);
    for (std::size_t i = 0; i < 64; ++i) {
      px[i] = x[perm[i]];
      py[i] = y[perm[i]];
    }
    CHECK(ssim(px, py) == doctest::Approx(s).epsilon(1e-12));
  }
  const double c1 = 1e-4;
  CHECK(std::abs(ssim(std::vector<double>(16, 0.0), std::vector<double>(16, 1.0)) - c1 / (1 + c1)) < 1e-9);
  CHECK_THROWS_AS(ssim(std::vector<double>(4), std::vector<double>(5)), DimensionError);
  SsimParams bad;
  bad.k1 = 0;
  CHECK_THROWS_AS(ssim(std::vector<double>(4), std::vector<double>(4), bad), ConfigError);
}

TEST_CASE("ssim against a hand-scripted computation") {
  const std::vector<double> x{0, 1, 1, 0}, y{0, 1, 0, 0};
  // mu_x = 0.5, mu_y = 0.25, var_x = 0.25, var_y = 0.1875, cov = 0.125
  const double c1 = 1e-4, c2 = 9e-4;
  const double expect = ((2 * 0.5 * 0.25 + c1) * (2 * 0.125 + c2)) / ((0.25 + 0.0625 + c1) * (0.25 + 0.1875 + c2));
  CHECK(ssim(x, y) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("per-image thresholds") {
  auto r = per_image_threshold({0.9, 0.8, 0.3, 0.1}, 2);
  CHECK(r.threshold == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(r.count_above == 2);
  CHECK(r.deviation == 0);

  r = per_image_threshold({0.7, 0.7, 0.7, 0.7}, 2);
  CHECK(r.threshold < 0.7);
  CHECK(r.count_above == 4);
  CHECK(r.deviation == 2);

  r = per_image_threshold({0.4, 0.9, 0.6}, 3);
  CHECK(r.threshold == doctest::Approx(0.2));
  CHECK(r.count_above == 3);

  CHECK_THROWS_AS(per_image_threshold({0.5, 0.6}, 0), DomainError);
  CHECK_THROWS_AS(per_image_threshold({0.5, 0.6}, 3), DomainError);
}

TEST_CASE("calibrate then apply yields exactly n_valid black pixels for distinct values") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(256);
    for (auto& v : p) v = u(rng);
    const int k = std::uniform_int_distribution<int>(1, 256)(rng);
    const auto r = per_image_threshold(p, k);
    const auto bin = apply_threshold(p, r.threshold);
    CHECK(std::count(bin.begin(), bin.end(), 1) == k);
  }
  // With ties the surplus equals the reported deviation.
  std::vector<double> tied{0.9, 0.5, 0.5, 0.5, 0.2};
  const auto r = per_image_threshold(tied, 2);
  const auto bin = apply_threshold(tied, r.threshold);
  CHECK(std::count(bin.begin(), bin.end(), 1) == 2 + r.deviation);
  CHECK(r.deviation == 2);
}

TEST_CASE("global threshold and apply") {
  CHECK(global_threshold({0.5, 0.6}) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(global_threshold({0.37}) == 0.37);
  CHECK_THROWS_AS(global_threshold({}), DomainError);
  CHECK(apply_threshold({0.4, 0.6}, 0.5) == std::vector<std::uint8_t>{0, 1});
  CHECK(apply_threshold({0.4, 0.6}, 0.1) == std::vector<std::uint8_t>{1, 1});
  CHECK_THROWS_AS(apply_threshold({0.4}, 1.0), DomainError);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> p(100);
  for (auto& v : p) v = u(rng);
  int prev = 101;
  for (double t = 0.05; t < 1; t += 0.05) {
    const auto b = apply_threshold(p, t);
    const int n = static_cast<int>(std::count(b.begin(), b.end(), 1));
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("quality tiers use strict inequalities") {
  const QualityThresholds t;
  CHECK(quality_tier(0.35, 0.80, t) == QualityTier::High);
  CHECK(quality_tier(-0.05, 0.60, t) == QualityTier::Low);
  CHECK(quality_tier(0.35, 0.70, t) == QualityTier::Medium);
  CHECK(quality_tier(0.3025, 0.9, t) == QualityTier::Medium);
  CHECK(quality_tier(0.9, 0.7591, t) == QualityTier::Medium);
  CHECK(quality_tier(0.0, 0.5, t) == QualityTier::Medium);
  CHECK(quality_tier(-0.5, 0.68, t) == QualityTier::Medium);
  QualityThresholds bad;
  bad.cr_low = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("evaluate_set on identical directories and on known pairs") {
  TempDir dir;
  fs::create_directories(dir.path() / "truth");
  fs::create_directories(dir.path() / "gen");
  std::vector<Img> truths, gens;
  std::mt19937_64 rng(17);
  for (int k = 0; k < 10; ++k) {
    Img t = block(16, 3 + k % 4, 4, 5);
    Img g = block(16, 3 + k % 4 + (k % 3) - 1, 4 + k % 2, 4 + k % 3);
    if (k == 7) g = Img(16, 16);
    truths.push_back(t);
    gens.push_back(g);
    auto save = [](const Img& im, const fs::path& p) {
      GrayImage out(im.w, im.h);
      for (std::size_t i = 0; i < im.px.size(); ++i) out.pixels[i] = im.px[i] ? 0.0f : 1.0f;
      write_png(p.string(), out);
    };
    save(t, dir.path() / "truth" / (std::to_string(100 + k) + ".png"));
    save(g, dir.path() / "gen" / (std::to_string(100 + k) + ".png"));
  }
  save_glyph((dir.path() / "gen" / "999.png").string(), GlyphImage{16, std::vector<std::uint8_t>(256, 1)});

  EvaluateOptions opts;
  opts.window = 2;
  const MetricsReport self = evaluate_set(dir.str("truth"), dir.str("truth"), opts);
  CHECK(self.rows.size() == 10);
  CHECK(self.mean_cr == 1.0);
  CHECK(self.mean_ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(self.high == 10);

  const MetricsReport r = evaluate_set(dir.str("gen"), dir.str("truth"), opts);
  REQUIRE(r.rows.size() == 10);
  CHECK(r.generated_only == std::vector<std::uint32_t>{999});
  double cr_sum = 0, ssim_sum = 0;
  for (int k = 0; k < 10; ++k) {
    const MetricsRow& row = r.rows[k];
    CHECK(row.codepoint == static_cast<std::uint32_t>(100 + k));
    // Independent evaluation with the test oracle.
    int best_num = 0, best_l1 = 0;
    bool have = false;
    Counts best{};
    for (int dy = -2; dy <= 2; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) {
        const Counts c = oracle_counts(gens[k], truths[k], dy, dx, false);
        const int num = c.valid - c.over - c.less, l1 = std::abs(dy) + std::abs(dx);
        if (!have || num > best_num || (num == best_num && l1 < best_l1)) {
          have = true;
          best_num = num;
          best_l1 = l1;
          best = c;
        }
      }
    }
    CHECK(row.coverage.n_over == best.over);
    CHECK(row.coverage.n_less == best.less);
    std::vector<double> a(256), b(256);
    for (int i = 0; i < 256; ++i) {
      a[i] = gens[k].px[i];
      b[i] = truths[k].px[i];
    }
    CHECK(row.ssim == doctest::Approx(ssim(a, b)).epsilon(1e-14));
    cr_sum += row.coverage.cr;
    ssim_sum += row.ssim;
  }
  CHECK(r.mean_cr == doctest::Approx(cr_sum / 10).epsilon(1e-14));
  CHECK(r.mean_ssim == doctest::Approx(ssim_sum / 10).epsilon(1e-14));
  CHECK(r.high + r.medium + r.low == 10);

  const std::string csv = report_csv(r);
  CHECK(csv.rfind("codepoint,cr,dy,dx,n_valid,n_over,n_less,ssim,tier\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);

  fs::create_directories(dir.path() / "none");
  save_glyph((dir.path() / "none" / "5.png").string(), GlyphImage{16, std::vector<std::uint8_t>(256, 1)});
  CHECK_THROWS_AS(evaluate_set(dir.str("none"), dir.str("truth"), opts), DataError);
}
