#include "glyphgan/turing.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "glyphgan/errors.hpp"

namespace glyphgan {

std::vector<int> TuringSheet::answer_key() const {
  std::vector<int> key;
  for (const auto& c : cells) {
    if (c.label == CellLabel::Generated) key.push_back(c.position);
  }
  return key;
}

int TuringSheet::generated_count() const { return static_cast<int>(answer_key().size()); }

TuringSheet generate_sheet(const std::vector<std::uint32_t>& generated_pool,
                           const std::vector<std::uint32_t>& truth_pool, int n_each, int rows, int cols,
                           std::uint64_t seed) {
  if (n_each < 1) throw ConfigError("turing sheet needs n_each >= 1");
  if (rows < 1 || cols < 1) throw ConfigError("turing sheet layout must be at least 1x1");
  if (static_cast<long>(rows) * cols < 2L * n_each) {
    throw ConfigError("layout " + std::to_string(rows) + "x" + std::to_string(cols) + " holds fewer than " +
                      std::to_string(2 * n_each) + " cells");
  }
  std::vector<std::uint32_t> gen(generated_pool.begin(), generated_pool.end());
  std::vector<std::uint32_t> truth(truth_pool.begin(), truth_pool.end());
  std::sort(gen.begin(), gen.end());
  gen.erase(std::unique(gen.begin(), gen.end()), gen.end());
  std::sort(truth.begin(), truth.end());
  truth.erase(std::unique(truth.begin(), truth.end()), truth.end());

  std::mt19937_64 rng(seed);
  std::shuffle(gen.begin(), gen.end(), rng);
  if (static_cast<int>(gen.size()) < n_each) {
    throw DataError("generated pool has " + std::to_string(gen.size()) + " glyphs, need " + std::to_string(n_each));
  }
  gen.resize(n_each);
  const std::set<std::uint32_t> used(gen.begin(), gen.end());
  std::vector<std::uint32_t> rest;
  for (auto cp : truth) {
    if (!used.count(cp)) rest.push_back(cp);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  if (static_cast<int>(rest.size()) < n_each) {
    throw DataError("truth pool has " + std::to_string(rest.size()) +
                    " glyphs not already used as generated cells, need " + std::to_string(n_each));
  }
  rest.resize(n_each);

  std::vector<TuringCell> cells;
  for (auto cp : gen) cells.push_back({0, cp, CellLabel::Generated});
  for (auto cp : rest) cells.push_back({0, cp, CellLabel::Truth});
  std::shuffle(cells.begin(), cells.end(), rng);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i].position = static_cast<int>(i) + 1;

  TuringSheet sheet;
  sheet.rows = rows;
  sheet.cols = cols;
  sheet.seed = seed;
  sheet.cells = std::move(cells);
  return sheet;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

// 3x5 digits, one row per 3-bit pattern.
constexpr std::uint8_t kDigits[10][5] = {
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
};

void draw_number(GrayImage& img, int number, int top, int center_x, int scale) {
  const std::string text = std::to_string(number);
  const int glyph_w = 3 * scale, gap = scale;
  const int width = static_cast<int>(text.size()) * (glyph_w + gap) - gap;
  int x0 = center_x - width / 2;
  for (char ch : text) {
    const auto& rows = kDigits[ch - '0'];
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (!((rows[r] >> (2 - c)) & 1)) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const int y = top + r * scale + dy, x = x0 + c * scale + dx;
            if (y >= 0 && y < img.height && x >= 0 && x < img.width) img.at(y, x) = 0.0f;
          }
        }
      }
    }
    x0 += glyph_w + gap;
  }
}

struct CellGeometry {
  int glyph, pad, label_h, cell_w, cell_h;
};

CellGeometry geometry(int glyph) {
  CellGeometry g;
  g.glyph = glyph;
  g.pad = std::max(2, glyph / 16);
  const int scale = glyph >= 64 ? 2 : 1;
  g.label_h = 5 * scale + 2 * g.pad;
  g.cell_w = glyph + 2 * g.pad + 2;  // one-pixel border on each side
  g.cell_h = glyph + 2 * g.pad + 2 + g.label_h;
  return g;
}

}  // namespace

GrayImage render_sheet(const std::vector<const GlyphImage*>& cell_images, int rows, int cols) {
  if (cell_images.empty()) throw ConfigError("render_sheet: no cells");
  if (static_cast<long>(rows) * cols < static_cast<long>(cell_images.size())) {
    throw ConfigError("render_sheet: layout too small");
  }
  const int glyph = cell_images.front()->size;
  for (const auto* g : cell_images) {
    if (g->size != glyph) throw DimensionError("render_sheet: glyph sizes differ");
  }
  const CellGeometry geo = geometry(glyph);
  const int scale = glyph >= 64 ? 2 : 1;
  GrayImage img(cols * geo.cell_w, rows * geo.cell_h, 1.0f);
  for (std::size_t i = 0; i < cell_images.size(); ++i) {
    const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
    const int top = r * geo.cell_h, left = c * geo.cell_w;
    const int box_h = glyph + 2 * geo.pad + 2;
    for (int x = left; x < left + geo.cell_w; ++x) {
      img.at(top, x) = 0.0f;
      img.at(top + box_h - 1, x) = 0.0f;
    }
    for (int y = top; y < top + box_h; ++y) {
      img.at(y, left) = 0.0f;
      img.at(y, left + geo.cell_w - 1) = 0.0f;
    }
    const GlyphImage& g = *cell_images[i];
    for (int y = 0; y < glyph; ++y) {
      for (int x = 0; x < glyph; ++x) {
        if (g.at(y, x)) img.at(top + 1 + geo.pad + y, left + 1 + geo.pad + x) = 0.0f;
      }
    }
    draw_number(img, static_cast<int>(i) + 1, top + box_h + geo.pad, left + geo.cell_w / 2, scale);
  }
  return img;
}

std::vector<const GlyphImage*> sheet_cell_images(const TuringSheet& sheet, const SheetImages& images) {
  std::vector<const GlyphImage*> out;
  for (const auto& cell : sheet.cells) {
    const auto* pool = cell.label == CellLabel::Generated ? images.generated : images.truth;
    if (!pool) throw ConfigError("sheet images missing a pool");
    auto it = pool->find(cell.codepoint);
    if (it == pool->end()) throw DataError("no image for codepoint " + std::to_string(cell.codepoint));
    out.push_back(&it->second);
  }
  return out;
}

RgbImage render_answer_image(const TuringSheet& sheet, const GrayImage& rendered) {
  RgbImage out(rendered.width, rendered.height);
  for (int y = 0; y < rendered.height; ++y) {
    for (int x = 0; x < rendered.width; ++x) {
      const std::uint8_t v = to_byte(rendered.at(y, x));
      out.set(y, x, v, v, v);
    }
  }
  const int cell_w = rendered.width / sheet.cols, cell_h = rendered.height / sheet.rows;
  for (int pos : sheet.answer_key()) {
    const int r = (pos - 1) / sheet.cols, c = (pos - 1) % sheet.cols;
    const int top = r * cell_h, left = c * cell_w;
    for (int t = 0; t < 2; ++t) {
      for (int x = left; x < left + cell_w; ++x) {
        out.set(top + t, x, 220, 0, 0);
        out.set(top + cell_h - 1 - t, x, 220, 0, 0);
      }
      for (int y = top; y < top + cell_h; ++y) {
        out.set(y, left + t, 220, 0, 0);
        out.set(y, left + cell_w - 1 - t, 220, 0, 0);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Keys and responses

std::string format_answer_key(const TuringSheet& sheet) {
  std::ostringstream out;
  const auto key = sheet.answer_key();
  out << "# cells=" << sheet.cells.size() << " generated=" << key.size() << " seed=" << sheet.seed << "\n";
  for (int p : key) out << p << "\n";
  return out.str();
}

AnswerKey answer_key_of(const TuringSheet& sheet) {
  return AnswerKey{static_cast<int>(sheet.cells.size()), sheet.answer_key()};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

int parse_position(const std::string& tok, int line_no) {
  const std::string t = trim(tok);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9) {
    throw DataError("line " + std::to_string(line_no) + ": '" + t + "' is not a cell position");
  }
  return std::stoi(t);
}

}  // namespace

AnswerKey parse_answer_key(const std::string& text) {
  AnswerKey key;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto at = line.find("cells=");
      if (at != std::string::npos) {
        key.cells = parse_position(line.substr(at + 6, line.find(' ', at) - at - 6), line_no);
        have_header = true;
      }
      continue;
    }
    key.generated.push_back(parse_position(line, line_no));
  }
  if (!have_header) throw DataError("answer key lacks the '# cells=N' header");
  std::sort(key.generated.begin(), key.generated.end());
  for (std::size_t i = 0; i < key.generated.size(); ++i) {
    if (key.generated[i] < 1 || key.generated[i] > key.cells || (i && key.generated[i] == key.generated[i - 1])) {
      throw DataError("answer key position " + std::to_string(key.generated[i]) + " is invalid or repeated");
    }
  }
  return key;
}

std::string format_cell_list(const TuringSheet& sheet) {
  std::ostringstream out;
  out << "position,codepoint\n";
  for (const auto& c : sheet.cells) out << c.position << "," << c.codepoint << "\n";
  return out.str();
}

std::vector<Response> parse_responses(const std::string& text, int cells, int required_marks) {
  std::vector<Response> out;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    Response r;
    r.participant = trim(fields[0]);
    if (r.participant.empty()) throw DataError("line " + std::to_string(line_no) + ": missing participant id");
    if (!ids.insert(r.participant).second) {
      throw DataError("line " + std::to_string(line_no) + ": participant '" + r.participant + "' appears twice");
    }
    std::set<int> seen;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (trim(fields[i]).empty() && i == fields.size() - 1) break;  // trailing comma
      const int p = parse_position(fields[i], line_no);
      if (p < 1 || p > cells) {
        throw DataError("line " + std::to_string(line_no) + ": position " + std::to_string(p) + " outside 1.." +
                        std::to_string(cells));
      }
      if (!seen.insert(p).second) {
        throw DataError("line " + std::to_string(line_no) + ": position " + std::to_string(p) + " marked twice");
      }
      r.marked.push_back(p);
    }
    if (required_marks > 0 && static_cast<int>(r.marked.size()) != required_marks) {
      throw DataError("line " + std::to_string(line_no) + ": expected exactly " + std::to_string(required_marks) +
                      " marks, found " + std::to_string(r.marked.size()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

ScoreReport score_responses(const AnswerKey& key, const std::vector<Response>& responses) {
  if (key.cells < 1) throw DataError("answer key has no cells");
  std::vector<char> generated(static_cast<std::size_t>(key.cells) + 1, 0);
  for (int p : key.generated) generated[p] = 1;
  ScoreReport report;
  double sum = 0;
  for (const auto& r : responses) {
    std::vector<char> marked(generated.size(), 0);
    for (int p : r.marked) {
      if (p < 1 || p > key.cells) throw DataError("participant " + r.participant + ": position out of range");
      marked[p] = 1;
    }
    ParticipantScore s;
    s.participant = r.participant;
    s.total = key.cells;
    for (int p = 1; p <= key.cells; ++p) s.correct += marked[p] == generated[p];
    s.accuracy = static_cast<double>(s.correct) / s.total;
    sum += s.accuracy;
    report.participants.push_back(s);
  }
  if (!responses.empty()) report.mean_accuracy = sum / static_cast<double>(responses.size());
  return report;
}

std::string format_score_report(const ScoreReport& report) {
  std::ostringstream out;
  out << "participant,correct,total,accuracy\n";
  char buf[64];
  for (const auto& p : report.participants) {
    std::snprintf(buf, sizeof buf, "%.6f", p.accuracy);
    out << p.participant << "," << p.correct << "," << p.total << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.6f", report.mean_accuracy);
  out << "# mean_accuracy=" << buf << " participants=" << report.participants.size() << "\n";
  return out.str();
}

}  // namespace glyphgan
