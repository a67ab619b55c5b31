#include "glyphgan/glyphgan.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "glyphgan/config.hpp"
#include "glyphgan/errors.hpp"
#include "glyphgan/gradcheck.hpp"
#include "glyphgan/parallel.hpp"
#include "glyphgan/trainer.hpp"
#include "glyphgan/turing.hpp"

namespace fs = std::filesystem;
using namespace glyphgan;

struct gg_config {
  RunConfig config;
};

struct gg_model {
  TrainState state;
};

namespace {

thread_local std::string g_last_error;
bool g_verbose = false;

gg_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return GG_ERR_CONFIG;
    case ErrorKind::Numeric:
      return GG_ERR_NUMERIC;
    default:  // dimension, domain, data and filesystem problems all concern the inputs
      return GG_ERR_DATA;
  }
}

template <typename F>
gg_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return GG_OK;
  } catch (const glyphgan::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return GG_ERR_DATA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GG_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ConfigError(std::string(what) + " must not be NULL");
}

const RunConfig& runtime(const gg_config* handle) {
  require(handle, "config");
  const RunConfig& cfg = handle->config;
  cfg.validate();
  if (cfg.deterministic) {
    set_num_threads(1);
  } else {
    set_num_threads(cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  }
  return cfg;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_dir(const char* dir, const char* what) {
  require(dir, what);
  if (!fs::is_directory(dir)) throw ConfigError(std::string(what) + " is not a directory: " + dir);
}

std::string list(const std::vector<std::uint32_t>& cps) {
  std::string s;
  for (auto cp : cps) s += (s.empty() ? "" : " ") + std::to_string(cp);
  return s;
}

struct Prepared {
  DatasetSplit split;
  std::vector<ImagePair> pairs;
};

Prepared load_prepared(const RunConfig& cfg, const std::string& data_dir) {
  if (!fs::is_directory(data_dir)) throw ConfigError("data directory not found: " + data_dir);
  Prepared p;
  p.split = read_manifest((fs::path(data_dir) / "split.txt").string());
  PairingOptions po;
  po.image_size = cfg.arch.image_size;
  po.threshold = 0.5;  // prepared glyphs are already binary
  po.format = CodepointFormat::Decimal;
  p.pairs = make_pairs((fs::path(data_dir) / "source").string(), (fs::path(data_dir) / "target").string(), po).pairs;
  return p;
}

// Reads a glyph that must already be size x size.
GlyphImage load_exact(const std::string& path, int size, double threshold, std::uint32_t cp) {
  const GrayImage img = read_image(path);
  if (img.width != size || img.height != size) {
    throw DataError(path + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " but the model expects " + std::to_string(size) + "x" + std::to_string(size) +
                    "; resize it with prepare (arch.image_size=" + std::to_string(size) + ")");
  }
  GlyphImage g = binarize_glyph(img, size, threshold);
  g.codepoint = cp;
  return g;
}

}  // namespace

extern "C" {

const char* gg_version(void) { return "0.1.0"; }

const char* gg_last_error(void) { return g_last_error.c_str(); }

const char* gg_status_name(gg_status status) {
  switch (status) {
    case GG_OK:
      return "ok";
    case GG_ERR_CONFIG:
      return "config";
    case GG_ERR_DATA:
      return "data";
    case GG_ERR_NUMERIC:
      return "numeric";
    default:
      return "internal";
  }
}

void gg_set_verbose(int on) { g_verbose = on != 0; }

gg_status gg_config_create(gg_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gg_config();
  });
}

void gg_config_destroy(gg_config* config) { delete config; }

gg_status gg_config_load_file(gg_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    apply_config_text(config->config, read_text(path));
  });
}

gg_status gg_config_set(gg_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    set_config_value(config->config, key, value);
  });
}

gg_status gg_config_get(const gg_config* config, const char* key, char* buffer, size_t size, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    const std::string v = get_config_value(config->config, key);
    if (needed) *needed = v.size() + 1;
    if (buffer && size > v.size()) std::memcpy(buffer, v.c_str(), v.size() + 1);
  });
}

gg_status gg_config_validate(const gg_config* config) {
  return guarded([&] {
    require(config, "config");
    config->config.validate();
  });
}

gg_status gg_config_write(const gg_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    write_config(path, config->config);
  });
}

gg_status gg_write_fixtures(const char* dir, int count, int image_size, uint64_t seed) {
  return guarded([&] {
    require(dir, "dir");
    if (count < 1 || image_size < 8) throw ConfigError("fixtures need count >= 1 and image_size >= 8");
    write_synthetic_fixtures(dir, FixtureOptions{count, image_size, seed});
  });
}

gg_status gg_prepare(const gg_config* config, const char* source_dir, const char* target_dir, const char* out_dir,
                     gg_prepare_summary* summary) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require_dir(source_dir, "source directory");
    require_dir(target_dir, "target directory");
    require(out_dir, "out_dir");
    PairingOptions po;
    po.image_size = cfg.arch.image_size;
    po.threshold = cfg.data.binarize_threshold;
    po.format = cfg.data.format;
    const PairingReport report = make_pairs(source_dir, target_dir, po);

    // Pairs with an empty side cannot be calibrated or scored.
    const std::set<std::uint32_t> empty(report.empty_glyphs.begin(), report.empty_glyphs.end());
    std::vector<std::uint32_t> cps;
    for (const auto& p : report.pairs) {
      if (!empty.count(p.codepoint())) cps.push_back(p.codepoint());
    }
    std::optional<std::vector<std::uint32_t>> pinned;
    if (!cfg.data.test_list.empty()) pinned = read_codepoint_list(cfg.data.test_list);
    const DatasetSplit split = split_dataset(cps, cfg.data.train_sizes, cfg.data.test_size, cfg.train.seed, pinned);

    const fs::path out = out_dir;
    make_dir(out / "source");
    make_dir(out / "target");
    for (const auto& p : report.pairs) {
      if (empty.count(p.codepoint())) continue;
      const std::string name = std::to_string(p.codepoint()) + ".png";
      save_glyph((out / "source" / name).string(), p.source);
      save_glyph((out / "target" / name).string(), p.target);
    }
    write_manifest((out / "split.txt").string(), split);
    std::ostringstream rep;
    rep << "pairs=" << report.pairs.size() - empty.size() << "\n";
    rep << "source_only=" << list(report.source_only) << "\n";
    rep << "target_only=" << list(report.target_only) << "\n";
    rep << "empty=" << list(report.empty_glyphs) << "\n";
    for (const auto& f : report.ignored_files) rep << "ignored=" << f << "\n";
    write_text(out / "pairing.txt", rep.str());
    write_config((out / "config.ini").string(), cfg);
    if (summary) {
      summary->pairs = static_cast<int>(cps.size());
      summary->source_only = static_cast<int>(report.source_only.size());
      summary->target_only = static_cast<int>(report.target_only.size());
      summary->ignored_files = static_cast<int>(report.ignored_files.size());
      summary->empty_glyphs = static_cast<int>(report.empty_glyphs.size());
      summary->test_size = static_cast<int>(split.test.size());
      summary->train_sets = static_cast<int>(split.train.size());
    }
  });
}

gg_status gg_train(const gg_config* config, const char* data_dir, int train_size, const char* out_dir,
                   const char* resume_checkpoint, gg_train_summary* summary) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const Prepared data = load_prepared(cfg, data_dir);
    if (data.split.train.empty()) throw DataError("split has no training sets");
    int size = train_size;
    if (size == 0) size = data.split.train.rbegin()->first;
    auto it = data.split.train.find(size);
    if (it == data.split.train.end()) throw ConfigError("split has no train_" + std::to_string(size) + " section");
    std::map<std::uint32_t, const ImagePair*> by_cp;
    for (const auto& p : data.pairs) by_cp[p.codepoint()] = &p;
    std::vector<ImagePair> pairs;
    for (auto cp : it->second) {
      auto found = by_cp.find(cp);
      if (found == by_cp.end()) throw DataError("training codepoint " + std::to_string(cp) + " has no prepared pair");
      pairs.push_back(*found->second);
    }

    TrainState state = resume_checkpoint ? load_checkpoint(resume_checkpoint)
                                         : init_train_state(cfg.arch, cfg.train, cfg.loss);
    if (state.arch.image_size != cfg.arch.image_size) {
      throw ConfigError("checkpoint image size " + std::to_string(state.arch.image_size) +
                        " differs from arch.image_size " + std::to_string(cfg.arch.image_size));
    }
    make_dir(out_dir);
    RunConfig resolved = cfg;
    resolved.arch = state.arch;
    resolved.train = state.train;
    resolved.loss = state.loss;
    write_config((fs::path(out_dir) / "config.ini").string(), resolved);
    TrainOptions opts;
    opts.out_dir = out_dir;
    opts.progress = g_verbose;
    const TrainResult result = train(state, pairs, opts);
    if (summary) {
      *summary = gg_train_summary{};
      summary->steps = state.step;
      summary->epochs = state.epoch;
      if (!result.log.empty()) {
        summary->final_l_d = result.log.back().l_d;
        summary->final_l1 = result.log.back().l1;
        summary->final_l_g = result.log.back().l_g;
      }
    }
  });
}

gg_status gg_generate(const gg_config* config, const char* checkpoint, const char* source_dir, const char* truth_dir,
                      const char* manifest, const char* out_dir, gg_generate_summary* summary) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require(checkpoint, "checkpoint");
    require_dir(source_dir, "source directory");
    require(out_dir, "out_dir");
    if (truth_dir) require_dir(truth_dir, "truth directory");
    TrainState state = load_checkpoint(checkpoint);
    const int size = state.arch.image_size;

    auto sources_index = index_glyph_dir(source_dir, cfg.data.format);
    std::vector<std::uint32_t> cps;
    if (manifest) {
      cps = read_manifest(manifest).test;
      for (auto cp : cps) {
        if (!sources_index.count(cp)) throw DataError("test codepoint " + std::to_string(cp) + " missing in " + source_dir);
      }
    } else {
      for (const auto& [cp, path] : sources_index) cps.push_back(cp);
    }
    if (cps.empty()) throw DataError(std::string("no glyphs to generate in ") + source_dir);

    std::vector<GlyphImage> sources;
    std::vector<GlyphImage> truths;
    std::map<std::uint32_t, std::string> truth_index;
    if (truth_dir) truth_index = index_glyph_dir(truth_dir, cfg.data.format);
    for (auto cp : cps) {
      sources.push_back(load_exact(sources_index.at(cp), size, cfg.data.binarize_threshold, cp));
      if (truth_dir) {
        auto t = truth_index.find(cp);
        if (t == truth_index.end()) throw DataError("no ground truth for codepoint " + std::to_string(cp));
        truths.push_back(load_exact(t->second, size, cfg.data.binarize_threshold, cp));
      }
    }
    std::vector<const GlyphImage*> truth_ptrs;
    for (const auto& t : truths) truth_ptrs.push_back(&t);
    const GenerateResult result = generate(state.generator, sources, truth_dir ? &truth_ptrs : nullptr, cfg.generate);
    write_generated(result, out_dir);
    RunConfig resolved = cfg;
    resolved.arch = state.arch;
    write_config((fs::path(out_dir) / "config.ini").string(), resolved);
    if (summary) {
      *summary = gg_generate_summary{};
      summary->glyphs = static_cast<int>(result.glyphs.size());
      for (const auto& g : result.glyphs) summary->calibrated += g.threshold.has_value();
      summary->has_global_threshold = result.global_threshold.has_value();
      summary->global_threshold = result.global_threshold.value_or(0.0);
      summary->applied_threshold = result.applied_threshold;
    }
  });
}

gg_status gg_evaluate(const gg_config* config, const char* generated_dir, const char* truth_dir, const char* out_dir,
                      gg_eval_summary* summary) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require_dir(generated_dir, "generated directory");
    require_dir(truth_dir, "truth directory");
    require(out_dir, "out_dir");
    const MetricsReport report = evaluate_set(generated_dir, truth_dir, cfg.metrics);
    make_dir(out_dir);
    write_text(fs::path(out_dir) / "metrics.csv", report_csv(report));
    write_text(fs::path(out_dir) / "metrics.txt", report_table(report));
    write_config((fs::path(out_dir) / "config.ini").string(), cfg);
    if (summary) {
      summary->evaluated = static_cast<int>(report.rows.size());
      summary->mean_cr = report.mean_cr;
      summary->mean_ssim = report.mean_ssim;
      summary->high = report.high;
      summary->medium = report.medium;
      summary->low = report.low;
      summary->window = report.window;
      summary->generated_only = static_cast<int>(report.generated_only.size());
      summary->truth_only = static_cast<int>(report.truth_only.size());
      summary->skipped = static_cast<int>(report.skipped.size());
    }
  });
}

gg_status gg_sweep(const gg_config* config, const char* data_dir, const char* out_dir, int* rows) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const Prepared data = load_prepared(cfg, data_dir);
    make_dir(out_dir);
    write_config((fs::path(out_dir) / "config.ini").string(), cfg);
    const auto result = sweep(data.pairs, data.split, cfg, out_dir, g_verbose);
    if (rows) *rows = static_cast<int>(result.size());
  });
}

gg_status gg_turing_generate(const gg_config* config, const char* generated_dir, const char* truth_dir,
                             const char* out_dir) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require_dir(generated_dir, "generated directory");
    require_dir(truth_dir, "truth directory");
    require(out_dir, "out_dir");
    const auto gen_index = index_glyph_dir(generated_dir, cfg.data.format);
    const auto truth_index = index_glyph_dir(truth_dir, cfg.data.format);
    std::vector<std::uint32_t> gen_pool, truth_pool;
    for (const auto& [cp, path] : gen_index) gen_pool.push_back(cp);
    for (const auto& [cp, path] : truth_index) truth_pool.push_back(cp);
    const auto& t = cfg.turing;
    const TuringSheet sheet = generate_sheet(gen_pool, truth_pool, t.n_each, t.rows, t.cols, t.seed);

    const int size = cfg.arch.image_size;
    std::map<std::uint32_t, GlyphImage> gen_images, truth_images;
    for (const auto& cell : sheet.cells) {
      const bool is_gen = cell.label == CellLabel::Generated;
      const auto& index = is_gen ? gen_index : truth_index;
      (is_gen ? gen_images : truth_images)[cell.codepoint] =
          load_glyph(index.at(cell.codepoint), size, cfg.data.binarize_threshold);
    }
    const GrayImage rendered =
        render_sheet(sheet_cell_images(sheet, SheetImages{&gen_images, &truth_images}), sheet.rows, sheet.cols);
    const fs::path out = out_dir;
    make_dir(out);
    write_png((out / "sheet.png").string(), rendered);
    write_text(out / "answer_key.txt", format_answer_key(sheet));
    write_text(out / "cells.csv", format_cell_list(sheet));
    if (t.answer_image) write_png((out / "answer.png").string(), render_answer_image(sheet, rendered));
    write_config((out / "config.ini").string(), cfg);
  });
}

gg_status gg_turing_score(const gg_config* config, const char* answer_key, const char* responses,
                          const char* out_path, double* mean_accuracy, int* participants) {
  return guarded([&] {
    const RunConfig& cfg = runtime(config);
    require(answer_key, "answer_key");
    require(responses, "responses");
    const AnswerKey key = parse_answer_key(read_text(answer_key));
    const auto parsed = parse_responses(read_text(responses), key.cells, cfg.turing.required_marks);
    if (parsed.empty()) throw DataError(std::string("no responses in ") + responses);
    const ScoreReport report = score_responses(key, parsed);
    if (out_path) write_text(out_path, format_score_report(report));
    if (mean_accuracy) *mean_accuracy = report.mean_accuracy;
    if (participants) *participants = static_cast<int>(report.participants.size());
  });
}

gg_status gg_gradcheck(uint64_t seed, int instances, gg_gradcheck_row* rows, size_t capacity, size_t* count,
                       int* all_passed) {
  return guarded([&] {
    if (instances < 1) throw ConfigError("instances must be >= 1");
    GradCheckOptions opts;
    opts.seed = seed;
    opts.instances = instances;
    const auto result = run_gradient_suite(opts);
    if (count) *count = result.size();
    bool ok = true;
    for (std::size_t i = 0; i < result.size(); ++i) {
      ok = ok && result[i].passed;
      if (rows && i < capacity) {
        std::snprintf(rows[i].op, sizeof rows[i].op, "%s", result[i].op.c_str());
        rows[i].instances = result[i].instances;
        rows[i].max_rel_error = result[i].max_rel_error;
        rows[i].passed = result[i].passed;
      }
    }
    if (all_passed) *all_passed = ok;
  });
}

gg_status gg_coverage_rate(const uint8_t* generated, const uint8_t* truth, int height, int width, int window,
                           int overlap_only, gg_coverage* out) {
  return guarded([&] {
    require(generated, "generated");
    require(truth, "truth");
    require(out, "out");
    if (height < 1 || width < 1 || window < 0) throw ConfigError("need height, width >= 1 and window >= 0");
    const auto c = coverage_rate_max(BinaryView{generated, height, width}, BinaryView{truth, height, width}, window,
                                     overlap_only ? CoverageMode::OverlapOnly : CoverageMode::WhitePadded);
    *out = gg_coverage{c.cr, c.dy, c.dx, c.n_valid, c.n_over, c.n_less};
  });
}

gg_status gg_ssim(const double* x, const double* y, size_t n, double k1, double k2, double dynamic_range,
                  double* out) {
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    SsimParams p{k1, k2, dynamic_range};
    *out = ssim(std::vector<double>(x, x + n), std::vector<double>(y, y + n), p);
  });
}

gg_status gg_per_image_threshold(const double* probabilities, size_t n, int n_valid, double* threshold,
                                 int* count_above) {
  return guarded([&] {
    require(probabilities, "probabilities");
    const auto r = per_image_threshold(std::vector<double>(probabilities, probabilities + n), n_valid);
    if (threshold) *threshold = r.threshold;
    if (count_above) *count_above = r.count_above;
  });
}

gg_status gg_model_load(const char* checkpoint, gg_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    auto model = std::make_unique<gg_model>();
    model->state = load_checkpoint(checkpoint);
    *out = model.release();
  });
}

void gg_model_destroy(gg_model* model) { delete model; }

int gg_model_image_size(const gg_model* model) { return model ? model->state.arch.image_size : 0; }

gg_status gg_model_generate(gg_model* model, const uint8_t* source, float* probabilities) {
  return guarded([&] {
    require(model, "model");
    require(source, "source");
    require(probabilities, "probabilities");
    const int size = model->state.arch.image_size;
    GlyphImage g;
    g.size = size;
    g.pixels.assign(source, source + static_cast<std::size_t>(size) * size);
    for (auto v : g.pixels) {
      if (v > 1) throw DomainError("source pixels must be 0 or 1");
    }
    GenerateConfig cfg;
    cfg.threshold_mode = ThresholdMode::Fixed;
    const auto result = generate(model->state.generator, {g}, nullptr, cfg);
    std::memcpy(probabilities, result.glyphs[0].probabilities.data(), sizeof(float) * result.glyphs[0].probabilities.size());
  });
}

}  // extern "C"
