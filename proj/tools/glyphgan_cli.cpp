// glyphgan command-line front end. Everything goes through the C API.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glyphgan/glyphgan.h"

namespace {

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  int threads = -1;
  bool deterministic = false;
  bool verbose = false;
};

// Thrown to unwind with a status once the message is printed.
struct Failure {
  gg_status status;
};

void check(gg_status status) {
  if (status == GG_OK) return;
  std::fprintf(stderr, "glyphgan: %s error: %s\n", gg_status_name(status), gg_last_error());
  throw Failure{status};
}

class Config {
 public:
  Config() { check(gg_config_create(&handle_)); }
  ~Config() { gg_config_destroy(handle_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
  gg_config* get() const { return handle_; }
  void set(const std::string& key, const std::string& value) { check(gg_config_set(handle_, key.c_str(), value.c_str())); }

 private:
  gg_config* handle_ = nullptr;
};

void apply_globals(Config& cfg, const Globals& g) {
  if (!g.config_file.empty()) check(gg_config_load_file(cfg.get(), g.config_file.c_str()));
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "glyphgan: config error: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{GG_ERR_CONFIG};
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.threads >= 0) cfg.set("run.threads", std::to_string(g.threads));
  if (g.deterministic) cfg.set("run.deterministic", "true");
  gg_set_verbose(g.verbose ? 1 : 0);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyphgan: conditional GAN glyph style transfer with coverage-rate evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gg_version()));
  Globals g;
  app.add_option("--config", g.config_file, "Config file (key=value with [sections])")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config value, e.g. --set train.epochs=5")->take_all();
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, ordered execution");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Pair, binarize and split two glyph directories");
  std::string p_source, p_target, p_out, p_sizes, p_test_list;
  int p_test_size = -1, fixture_count = 48, fixture_size = 64;
  long long p_seed = -1;
  bool synthetic = false;
  prepare->add_option("--source", p_source, "Source font directory");
  prepare->add_option("--target", p_target, "Target font directory");
  prepare->add_option("--out", p_out, "Output directory")->required();
  prepare->add_option("--sizes", p_sizes, "Training set sizes, comma separated");
  prepare->add_option("--test-size", p_test_size, "Test set size");
  prepare->add_option("--test-list", p_test_list, "File of codepoints pinning the test set");
  prepare->add_option("--seed", p_seed, "Split seed (train.seed)");
  prepare->add_flag("--synthetic-fixtures", synthetic, "Generate the toy corpus into <out>/fixtures and use it");
  prepare->add_option("--fixture-count", fixture_count, "Glyphs per font in the toy corpus")->check(CLI::PositiveNumber);
  prepare->add_option("--fixture-size", fixture_size, "Pixel size of toy glyphs")->check(CLI::Range(8, 4096));

  // train
  auto* train = app.add_subcommand("train", "Train on a prepared directory");
  std::string t_data, t_out, t_resume;
  int t_size = 0, t_epochs = -1;
  train->add_option("--data", t_data, "Prepared directory")->required();
  train->add_option("--out", t_out, "Run directory")->required();
  train->add_option("--size", t_size, "Training set size from the split (default: largest)");
  train->add_option("--resume", t_resume, "Continue from a checkpoint");
  train->add_option("--epochs", t_epochs, "Shorthand for --set train.epochs=N");

  // generate
  auto* gen = app.add_subcommand("generate", "Run a trained generator");
  std::string g_ckpt, g_source, g_truth, g_manifest, g_out;
  gen->add_option("--checkpoint", g_ckpt, "Checkpoint file")->required();
  gen->add_option("--source", g_source, "Source glyph directory")->required();
  gen->add_option("--truth", g_truth, "Ground truths for threshold calibration");
  gen->add_option("--manifest", g_manifest, "Only the [test] codepoints of this split");
  gen->add_option("--out", g_out, "Output directory")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Coverage rate, SSIM and quality tiers");
  std::string e_gen, e_truth, e_out;
  eval->add_option("--generated", e_gen, "Generated glyph directory")->required();
  eval->add_option("--truth", e_truth, "Ground-truth glyph directory")->required();
  eval->add_option("--out", e_out, "Report directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one model per training-set size");
  std::string s_data, s_out;
  sweep->add_option("--data", s_data, "Prepared directory")->required();
  sweep->add_option("--out", s_out, "Output directory")->required();

  // turing
  auto* tgen = app.add_subcommand("turing-gen", "Build a Turing-test sheet and its answer key");
  std::string tg_gen, tg_truth, tg_out;
  tgen->add_option("--generated", tg_gen, "Generated glyph directory")->required();
  tgen->add_option("--truth", tg_truth, "Ground-truth glyph directory")->required();
  tgen->add_option("--out", tg_out, "Output directory")->required();

  auto* tscore = app.add_subcommand("turing-score", "Score participant responses against an answer key");
  std::string ts_key, ts_resp, ts_out;
  tscore->add_option("--key", ts_key, "answer_key.txt")->required();
  tscore->add_option("--responses", ts_resp, "Responses: id,p1,p2,... per line")->required();
  tscore->add_option("--out", ts_out, "Score report file");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  unsigned long long gc_seed = 1234;
  int gc_instances = 10;
  grad->add_option("--seed", gc_seed, "Seed");
  grad->add_option("--instances", gc_instances, "Random instances per op")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : GG_ERR_CONFIG;
  }

  try {
    Config cfg;
    apply_globals(cfg, g);

    if (*prepare) {
      if (synthetic) {
        const std::string fx = (std::filesystem::path(p_out) / "fixtures").string();
        check(gg_write_fixtures(fx.c_str(), fixture_count, fixture_size, 7));
        if (p_source.empty()) p_source = fx + "/source";
        if (p_target.empty()) p_target = fx + "/target";
      }
      if (p_source.empty() || p_target.empty()) {
        std::fprintf(stderr, "glyphgan: config error: prepare needs --source and --target, or --synthetic-fixtures\n");
        return GG_ERR_CONFIG;
      }
      if (!p_sizes.empty()) cfg.set("data.train_sizes", p_sizes);
      if (p_test_size >= 0) cfg.set("data.test_size", std::to_string(p_test_size));
      if (!p_test_list.empty()) cfg.set("data.test_list", p_test_list);
      if (p_seed >= 0) cfg.set("train.seed", std::to_string(p_seed));
      gg_prepare_summary s{};
      check(gg_prepare(cfg.get(), p_source.c_str(), p_target.c_str(), p_out.c_str(), &s));
      std::printf("pairs=%d test=%d train_sets=%d source_only=%d target_only=%d empty=%d ignored=%d\n", s.pairs,
                  s.test_size, s.train_sets, s.source_only, s.target_only, s.empty_glyphs, s.ignored_files);
    } else if (*train) {
      if (t_epochs >= 0) cfg.set("train.epochs", std::to_string(t_epochs));
      gg_train_summary s{};
      check(gg_train(cfg.get(), t_data.c_str(), t_size, t_out.c_str(), opt(t_resume), &s));
      std::printf("steps=%lld epochs=%d L_d=%.6g L1=%.6g L_g=%.6g\n", static_cast<long long>(s.steps), s.epochs,
                  s.final_l_d, s.final_l1, s.final_l_g);
    } else if (*gen) {
      gg_generate_summary s{};
      check(gg_generate(cfg.get(), g_ckpt.c_str(), g_source.c_str(), opt(g_truth), opt(g_manifest), g_out.c_str(), &s));
      std::printf("glyphs=%d calibrated=%d", s.glyphs, s.calibrated);
      if (s.has_global_threshold) std::printf(" global_threshold=%.6f", s.global_threshold);
      std::printf(" applied_threshold=%.6f\n", s.applied_threshold);
    } else if (*eval) {
      gg_eval_summary s{};
      check(gg_evaluate(cfg.get(), e_gen.c_str(), e_truth.c_str(), e_out.c_str(), &s));
      std::printf("evaluated=%d mean_cr=%.6f mean_ssim=%.6f high=%d medium=%d low=%d window=%d skipped=%d\n",
                  s.evaluated, s.mean_cr, s.mean_ssim, s.high, s.medium, s.low, s.window, s.skipped);
    } else if (*sweep) {
      int rows = 0;
      check(gg_sweep(cfg.get(), s_data.c_str(), s_out.c_str(), &rows));
      std::printf("sizes=%d report=%s\n", rows, (std::filesystem::path(s_out) / "sweep.csv").string().c_str());
    } else if (*tgen) {
      check(gg_turing_generate(cfg.get(), tg_gen.c_str(), tg_truth.c_str(), tg_out.c_str()));
      std::printf("sheet=%s\n", (std::filesystem::path(tg_out) / "sheet.png").string().c_str());
    } else if (*tscore) {
      double mean = 0;
      int participants = 0;
      check(gg_turing_score(cfg.get(), ts_key.c_str(), ts_resp.c_str(), opt(ts_out), &mean, &participants));
      std::printf("participants=%d mean_accuracy=%.6f\n", participants, mean);
    } else if (*grad) {
      std::vector<gg_gradcheck_row> rows(64);
      size_t count = 0;
      int all = 0;
      check(gg_gradcheck(gc_seed, gc_instances, rows.data(), rows.size(), &count, &all));
      std::printf("%-32s %9s %14s  %s\n", "op", "instances", "max_rel_error", "result");
      for (size_t i = 0; i < count && i < rows.size(); ++i) {
        std::printf("%-32s %9d %14.3e  %s\n", rows[i].op, rows[i].instances, rows[i].max_rel_error,
                    rows[i].passed ? "pass" : "FAIL");
      }
      if (!all) {
        std::fprintf(stderr, "glyphgan: numeric error: gradient check failed\n");
        return GG_ERR_NUMERIC;
      }
    }
  } catch (const Failure& f) {
    return f.status;
  }
  return 0;
}
