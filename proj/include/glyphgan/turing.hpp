#pragma once

// Balanced generated/ground-truth glyph sheets and response scoring.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyphgan/data.hpp"
#include "glyphgan/image.hpp"

namespace glyphgan {

enum class CellLabel { Generated, Truth };

struct TuringCell {
  int position = 0;  // 1-based, row-major
  std::uint32_t codepoint = 0;
  CellLabel label = CellLabel::Truth;
};

struct TuringSheet {
  int rows = 0;
  int cols = 0;
  std::uint64_t seed = 0;
  std::vector<TuringCell> cells;  // in position order

  std::vector<int> answer_key() const;  // positions of generated cells, ascending
  int generated_count() const;
};

// Draws n_each codepoints from each pool without reusing a codepoint across
// the two halves, then shuffles all cells onto the grid.
TuringSheet generate_sheet(const std::vector<std::uint32_t>& generated_pool,
                           const std::vector<std::uint32_t>& truth_pool, int n_each, int rows, int cols,
                           std::uint64_t seed);

struct SheetImages {
  const std::map<std::uint32_t, GlyphImage>* generated = nullptr;
  const std::map<std::uint32_t, GlyphImage>* truth = nullptr;
};

// Grid of bordered cells with the position number under each glyph. Takes
// the per-cell images in position order; labels are not an input.
GrayImage render_sheet(const std::vector<const GlyphImage*>& cell_images, int rows, int cols);
std::vector<const GlyphImage*> sheet_cell_images(const TuringSheet& sheet, const SheetImages& images);
// Sheet with red squares around the generated cells.
RgbImage render_answer_image(const TuringSheet& sheet, const GrayImage& rendered);

struct AnswerKey {
  int cells = 0;
  std::vector<int> generated;  // ascending
};

// "# cells=N generated=K seed=S" header, then one generated position per line.
std::string format_answer_key(const TuringSheet& sheet);
AnswerKey parse_answer_key(const std::string& text);
AnswerKey answer_key_of(const TuringSheet& sheet);

// position,codepoint for every cell; carries no labels.
std::string format_cell_list(const TuringSheet& sheet);

struct Response {
  std::string participant;
  std::vector<int> marked;
};

// One participant per line: "id,p1,p2,...". '#' comments and blank lines are
// skipped. With required_marks > 0 every participant must mark exactly that
// many cells. Errors name the offending line.
std::vector<Response> parse_responses(const std::string& text, int cells, int required_marks = 0);

struct ParticipantScore {
  std::string participant;
  int correct = 0;
  int total = 0;
  double accuracy = 0;
};

struct ScoreReport {
  std::vector<ParticipantScore> participants;
  double mean_accuracy = 0;
};

// A cell is right when marked and generated, or unmarked and truth.
ScoreReport score_responses(const AnswerKey& key, const std::vector<Response>& responses);
std::string format_score_report(const ScoreReport& report);

}  // namespace glyphgan
