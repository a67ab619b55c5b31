#pragma once

// Adversarial training loop, checkpoints, inference and the training-set-size
// sweep.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glyphgan/config.hpp"
#include "glyphgan/data.hpp"
#include "glyphgan/losses.hpp"
#include "glyphgan/metrics.hpp"
#include "glyphgan/model.hpp"
#include "glyphgan/optim.hpp"

namespace glyphgan {

// Everything needed to continue training exactly where it stopped.
struct TrainState {
  ArchConfig arch;
  TrainConfig train;
  LossWeights loss;
  Generator<float> generator;
  Discriminator<float> discriminator;
  AdamState<float> adam_g;
  AdamState<float> adam_d;
  int epoch = 0;  // completed epochs
  std::int64_t step = 0;
  std::mt19937_64 rng;
};

// Fresh networks: generator seeded with seed, discriminator with seed + 1,
// the shuffle/augmentation stream with seed + 2.
TrainState init_train_state(const ArchConfig& arch, const TrainConfig& train, const LossWeights& loss);

// Binary layout: "GLYPHGANCKPT" magic, u32 version, length-prefixed config
// text, epoch, step, Adam step counters, RNG state text, then a table of
// (name, shape, little-endian float32 values).
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

// Bitwise comparison of every tensor, buffer, optimizer slot and the RNG.
bool states_equal(const TrainState& a, const TrainState& b);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double l_d = 0;
  double l_gan = 0;
  double l1 = 0;
  double l_tv = 0;
  double l_g = 0;
  double lr_g = 0;
  double lr_d = 0;
  double wall_seconds = 0;
};

struct StepOptions {
  // Snapshot the idle network around each update and throw if it changed.
  bool check_isolation = false;
};

// d_steps discriminator updates on (real, detached fake), then one generator
// update through the updated, frozen discriminator.
StepRecord train_step(TrainState& state, const std::vector<const ImagePair*>& batch, double lr_g, double lr_d,
                      const StepOptions& options = {});

struct TrainOptions {
  std::string out_dir;  // empty: keep everything in memory
  StepOptions step;
  bool progress = false;  // progress lines on stderr
  int stop_after_epoch = -1;  // stop early once this many epochs are complete
  std::function<void(const StepRecord&)> on_step;
  std::function<bool(const StepRecord&)> stop_when;  // checked with the last step of each epoch
};

struct TrainResult {
  std::vector<StepRecord> log;
  std::string final_checkpoint;
};

// Runs epochs state.epoch .. train.epochs - 1. Each epoch reshuffles with the
// state RNG and decays the learning rates. Writes train_log.csv,
// checkpoint_epoch_<e>.ggc every checkpoint_every epochs and checkpoint.ggc at
// the end. A resumed run appends to an existing log.
TrainResult train(TrainState& state, const std::vector<ImagePair>& pairs, const TrainOptions& options);

std::string log_header();
std::string log_row(const StepRecord& record);

struct GeneratedGlyph {
  std::uint32_t codepoint = 0;
  std::vector<float> probabilities;  // ink probability, row-major
  GlyphImage binary;
  std::optional<ThresholdResult> threshold;  // when a truth was supplied
  int truth_valid = -1;
};

struct GenerateResult {
  int image_size = 0;
  std::vector<GeneratedGlyph> glyphs;
  std::optional<double> global_threshold;
  double applied_threshold = 0;  // global or fixed value used for binaries
  ThresholdMode mode = ThresholdMode::Fixed;
};

// truths, when given, must align with sources. Without truths the mode falls
// back to fixed.
GenerateResult generate(Generator<float>& generator, const std::vector<GlyphImage>& sources,
                        const std::vector<const GlyphImage*>* truths, const GenerateConfig& config);

// codepoint,threshold,count_above,n_valid,deviation
std::string thresholds_csv(const GenerateResult& result);
// Probability maps as grayscale PNG (white = 0) and binaries as glyph PNGs.
void write_generated(const GenerateResult& result, const std::string& out_dir);

struct SweepRow {
  int size = 0;
  int evaluated = 0;
  double mean_cr = 0;
  double mean_ssim = 0;
  int high = 0;
  int medium = 0;
  int low = 0;
  double global_threshold = 0;
};

// Trains one model per training size on the shared test split, binarizes test
// outputs at the global threshold and evaluates them. Writes size_<N>/ with a
// checkpoint and metrics.csv, plus sweep.csv at the top.
std::vector<SweepRow> sweep(const std::vector<ImagePair>& pairs, const DatasetSplit& split, const RunConfig& config,
                            const std::string& out_dir, bool progress = false);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace glyphgan
