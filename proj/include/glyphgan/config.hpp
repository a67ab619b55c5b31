#pragma once

// Run configuration: every tunable in one struct, stored as key=value text
// with [section] headers. Files are applied first, then --set overrides.

#include <cstdint>
#include <string>
#include <vector>

#include "glyphgan/data.hpp"
#include "glyphgan/losses.hpp"
#include "glyphgan/metrics.hpp"
#include "glyphgan/model.hpp"
#include "glyphgan/optim.hpp"

namespace glyphgan {

struct DataConfig {
  double binarize_threshold = 0.5;
  CodepointFormat format = CodepointFormat::Auto;
  int test_size = 10;
  std::vector<int> train_sizes{8, 16, 32};
  std::string test_list;  // optional codepoint list pinning the test set
};

enum class ThresholdMode { PerImage, Global, Fixed };

struct GenerateConfig {
  // per-image and global need ground truths; fixed uses `threshold`.
  ThresholdMode threshold_mode = ThresholdMode::PerImage;
  double threshold = 0.5;
  bool training_batchnorm = false;  // debug: batch statistics at inference
};

struct TuringConfig {
  int n_each = 50;
  int rows = 10;
  int cols = 10;
  std::uint64_t seed = 1;
  int required_marks = 0;  // 0 = free marking
  bool answer_image = true;
};

struct RunConfig {
  ArchConfig arch = ArchConfig::for_image_size(32);
  TrainConfig train;
  LossWeights loss;
  DataConfig data;
  EvaluateOptions metrics;
  GenerateConfig generate;
  TuringConfig turing;
  bool deterministic = false;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

ThresholdMode parse_threshold_mode(const std::string& name);
const char* threshold_mode_name(ThresholdMode mode);

// "section.key" = value. Unknown keys and malformed values are config errors.
void set_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& dotted_key);
std::vector<std::string> config_keys();

// Applies a whole file's worth of text; errors name the line.
void apply_config_text(RunConfig& config, const std::string& text);
RunConfig load_config(const std::string& path);

// Fully resolved config. With sections non-empty only those are written.
std::string format_config(const RunConfig& config, const std::vector<std::string>& sections = {});
void write_config(const std::string& path, const RunConfig& config);

}  // namespace glyphgan
