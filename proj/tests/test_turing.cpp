#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "glyphgan/errors.hpp"
#include "glyphgan/turing.hpp"
#include "test_util.hpp"

using namespace glyphgan;
using glyphgan::testing::TempDir;

namespace {

std::vector<std::uint32_t> range_cps(std::uint32_t from, int n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), from);
  return v;
}

GlyphImage noise_glyph(int size, std::uint32_t cp, std::mt19937_64& rng) {
  GlyphImage g;
  g.size = size;
  g.codepoint = cp;
  g.pixels.resize(static_cast<std::size_t>(size) * size);
  std::bernoulli_distribution ink(0.3);
  for (auto& p : g.pixels) p = ink(rng);
  return g;
}

std::vector<int> all_positions(int cells) {
  std::vector<int> v(cells);
  std::iota(v.begin(), v.end(), 1);
  return v;
}

}  // namespace

TEST_CASE("sheet of 50 and 50 on a 10x10 grid is balanced with distinct codepoints") {
  // Pools overlap heavily, so disjointness is exercised.
  const auto sheet = generate_sheet(range_cps(100, 120), range_cps(150, 120), 50, 10, 10, 3);
  REQUIRE(sheet.cells.size() == 100);
  CHECK(sheet.generated_count() == 50);
  CHECK(sheet.answer_key().size() == 50);
  std::set<std::uint32_t> cps;
  for (std::size_t i = 0; i < sheet.cells.size(); ++i) {
    CHECK(sheet.cells[i].position == static_cast<int>(i) + 1);
    cps.insert(sheet.cells[i].codepoint);
  }
  CHECK(cps.size() == 100);
}

TEST_CASE("sheet generation is seeded") {
  const auto a = generate_sheet(range_cps(0, 80), range_cps(0, 80), 20, 5, 8, 11);
  const auto b = generate_sheet(range_cps(0, 80), range_cps(0, 80), 20, 5, 8, 11);
  const auto c = generate_sheet(range_cps(0, 80), range_cps(0, 80), 20, 5, 8, 12);
  CHECK(format_answer_key(a) == format_answer_key(b));
  CHECK(format_cell_list(a) == format_cell_list(b));
  CHECK(format_cell_list(a) != format_cell_list(c));
}

TEST_CASE("minimal sheet and error cases") {
  const auto s = generate_sheet({1}, {2}, 1, 1, 2, 0);
  REQUIRE(s.cells.size() == 2);
  CHECK(s.generated_count() == 1);

  CHECK_THROWS_AS(generate_sheet(range_cps(0, 10), range_cps(0, 10), 5, 3, 3, 0), ConfigError);
  CHECK_THROWS_AS(generate_sheet(range_cps(0, 4), range_cps(100, 10), 5, 10, 10, 0), DataError);
  // Enough truth glyphs in total, but not once the generated picks are removed.
  CHECK_THROWS_AS(generate_sheet(range_cps(0, 5), range_cps(0, 8), 5, 10, 10, 0), DataError);
  CHECK_THROWS_AS(generate_sheet({1}, {2}, 0, 1, 2, 0), ConfigError);
}

TEST_CASE("answer key text round trip") {
  const auto sheet = generate_sheet(range_cps(0, 30), range_cps(0, 30), 12, 4, 6, 5);
  const std::string text = format_answer_key(sheet);
  CHECK(text.rfind("# cells=24 generated=12", 0) == 0);
  const auto key = parse_answer_key(text);
  CHECK(key.cells == 24);
  CHECK(key.generated == sheet.answer_key());

  CHECK_THROWS_AS(parse_answer_key("3\n4\n"), DataError);
  CHECK_THROWS_AS(parse_answer_key("# cells=4\n5\n"), DataError);
  CHECK_THROWS_AS(parse_answer_key("# cells=4\n2\n2\n"), DataError);
}

TEST_CASE("response parsing") {
  const auto r = parse_responses("# header\nalice,1,3\n\nbob\ncarol,2,\n", 4);
  REQUIRE(r.size() == 3);
  CHECK(r[0].participant == "alice");
  CHECK(r[0].marked == std::vector<int>{1, 3});
  CHECK(r[1].marked.empty());
  CHECK(r[2].marked == std::vector<int>{2});

  auto message_of = [](const std::string& text, int cells, int k = 0) {
    try {
      parse_responses(text, cells, k);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of("a,1\nb,x\n", 4).find("line 2") != std::string::npos);
  CHECK(message_of("a,1\nb,5\n", 4).find("line 2") != std::string::npos);
  CHECK(message_of("a,1,1\n", 4).find("line 1") != std::string::npos);
  CHECK(message_of("a,1\na,2\n", 4).find("line 2") != std::string::npos);
  CHECK(message_of(",1\n", 4).find("line 1") != std::string::npos);
  CHECK(message_of("a,1,2\nb,3\n", 4, 2).find("line 2") != std::string::npos);
  CHECK(message_of("a,1,2\nb,3,4\n", 4, 2).empty());
}

TEST_CASE("scoring: exact key, all marked, none marked") {
  const auto sheet = generate_sheet(range_cps(0, 100), range_cps(0, 100), 50, 10, 10, 9);
  const auto key = answer_key_of(sheet);
  const auto report = score_responses(key, {{"exact", key.generated}, {"all", all_positions(100)}, {"none", {}}});
  CHECK(report.participants[0].accuracy == 1.0);
  CHECK(report.participants[1].accuracy == 0.5);
  CHECK(report.participants[2].accuracy == 0.5);
  CHECK(report.mean_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(report.participants[0].correct == 100);
  CHECK(report.participants[0].total == 100);
}

TEST_CASE("complementing a response maps accuracy a to 1 - a") {
  std::mt19937_64 rng(4);
  const auto sheet = generate_sheet(range_cps(0, 40), range_cps(0, 40), 15, 5, 6, 21);
  const auto key = answer_key_of(sheet);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> marked, unmarked;
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0, 1)(rng));
    for (int p = 1; p <= key.cells; ++p) (coin(rng) ? marked : unmarked).push_back(p);
    const auto rep = score_responses(key, {{"r", marked}, {"c", unmarked}});
    // Counts are integers, so the identity is exact in counts.
    CHECK(rep.participants[0].correct + rep.participants[1].correct == key.cells);
    CHECK(rep.participants[1].accuracy == doctest::Approx(1.0 - rep.participants[0].accuracy).epsilon(1e-15));
  }
}

TEST_CASE("random respondents marking n_each cells average 0.5") {
  const auto sheet = generate_sheet(range_cps(0, 100), range_cps(0, 100), 50, 10, 10, 1);
  const auto key = answer_key_of(sheet);
  std::mt19937_64 rng(2024);
  std::vector<Response> responses;
  auto positions = all_positions(100);
  for (int i = 0; i < 10000; ++i) {
    std::shuffle(positions.begin(), positions.end(), rng);
    responses.push_back({"p" + std::to_string(i), {positions.begin(), positions.begin() + 50}});
  }
  const auto report = score_responses(key, responses);
  CHECK(std::abs(report.mean_accuracy - 0.5) <= 0.02);

  // Exact expectation: h of the n marks hit generated cells (hypergeometric),
  // which leaves h truth cells unmarked, so 2h of 2n cells are right.
  double expected = 0;
  const int n = 50;
  auto lchoose = [](int a, int b) { return std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0); };
  for (int h = 0; h <= n; ++h) {
    const double p = std::exp(lchoose(n, h) + lchoose(n, n - h) - lchoose(2 * n, n));
    expected += p * (2.0 * h) / (2.0 * n);
  }
  CHECK(expected == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sheet image does not depend on labels") {
  std::mt19937_64 rng(8);
  const int size = 24;
  std::map<std::uint32_t, GlyphImage> images;
  for (std::uint32_t cp = 0; cp < 20; ++cp) images[cp] = noise_glyph(size, cp, rng);

  auto sheet = generate_sheet(range_cps(0, 20), range_cps(0, 20), 6, 3, 4, 77);
  auto swapped = sheet;
  for (auto& c : swapped.cells) c.label = c.label == CellLabel::Generated ? CellLabel::Truth : CellLabel::Generated;
  REQUIRE(sheet.answer_key() != swapped.answer_key());

  const SheetImages both{&images, &images};
  TempDir dir;
  write_png(dir.str("a.png"), render_sheet(sheet_cell_images(sheet, both), sheet.rows, sheet.cols));
  write_png(dir.str("b.png"), render_sheet(sheet_cell_images(swapped, both), swapped.rows, swapped.cols));
  CHECK(glyphgan::testing::read_file(dir.path() / "a.png") == glyphgan::testing::read_file(dir.path() / "b.png"));

  // Answer images do differ, and mark exactly the generated cells.
  const auto rendered = render_sheet(sheet_cell_images(sheet, both), sheet.rows, sheet.cols);
  const auto ans = render_answer_image(sheet, rendered);
  const int cell_w = rendered.width / sheet.cols, cell_h = rendered.height / sheet.rows;
  const auto key = sheet.answer_key();
  for (int pos = 1; pos <= 12; ++pos) {
    const int y = ((pos - 1) / sheet.cols) * cell_h, x = ((pos - 1) % sheet.cols) * cell_w + cell_w / 2;
    const auto* px = &ans.pixels[(static_cast<std::size_t>(y) * ans.width + x) * 3];
    const bool red = px[0] == 220 && px[1] == 0;
    CHECK(red == std::binary_search(key.begin(), key.end(), pos));
  }
}

TEST_CASE("rendered cells hold the glyph pixels") {
  std::mt19937_64 rng(3);
  const auto g = noise_glyph(16, 1, rng);
  const auto img = render_sheet({&g}, 1, 1);
  // Glyph sits inside a one-pixel border plus padding of 2.
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) CHECK((img.at(3 + y, 3 + x) == 0.0f) == (g.at(y, x) == 1));
  }
  for (int x = 0; x < img.width; ++x) CHECK(img.at(0, x) == 0.0f);
  GlyphImage other = noise_glyph(8, 2, rng);
  CHECK_THROWS_AS(render_sheet({&g, &other}, 1, 2), DimensionError);
  CHECK_THROWS_AS(render_sheet({&g, &g}, 1, 1), ConfigError);
}
