/* glyphgan C API.
 *
 * Every function returns a gg_status. On failure a one-line message is kept
 * per thread and returned by gg_last_error(). Handles are opaque and owned by
 * the caller: each *_create / *_load has a matching *_destroy.
 */
#ifndef GLYPHGAN_H
#define GLYPHGAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define GG_API __declspec(dllexport)
#else
#define GG_API __attribute__((visibility("default")))
#endif

typedef enum {
  GG_OK = 0,
  GG_ERR_INTERNAL = 1,
  GG_ERR_CONFIG = 2,  /* bad usage, configuration or missing path */
  GG_ERR_DATA = 3,    /* unreadable, malformed or insufficient data */
  GG_ERR_NUMERIC = 4  /* NaN/Inf during training or evaluation */
} gg_status;

GG_API const char* gg_version(void);
GG_API const char* gg_last_error(void);
/* Short category name for a status: "ok", "config", "data", "numeric", "internal". */
GG_API const char* gg_status_name(gg_status status);

/* Progress lines on stderr for long-running calls. Off by default. */
GG_API void gg_set_verbose(int on);

/* ---- configuration ---------------------------------------------------- */

typedef struct gg_config gg_config;

GG_API gg_status gg_config_create(gg_config** out);
GG_API void gg_config_destroy(gg_config* config);
/* key=value text with [section] headers; later settings win. */
GG_API gg_status gg_config_load_file(gg_config* config, const char* path);
/* key is "section.name", e.g. "train.epochs". */
GG_API gg_status gg_config_set(gg_config* config, const char* key, const char* value);
/* Copies the value, NUL-terminated, when it fits. *needed gets the full
 * length including the terminator. */
GG_API gg_status gg_config_get(const gg_config* config, const char* key, char* buffer, size_t size, size_t* needed);
GG_API gg_status gg_config_validate(const gg_config* config);
GG_API gg_status gg_config_write(const gg_config* config, const char* path);

/* ---- pipeline ----------------------------------------------------------- */

typedef struct {
  int pairs;
  int source_only;
  int target_only;
  int ignored_files;
  int empty_glyphs;
  int test_size;
  int train_sets;
} gg_prepare_summary;

/* Deterministic toy corpus in dir/source and dir/target. */
GG_API gg_status gg_write_fixtures(const char* dir, int count, int image_size, uint64_t seed);

/* Pairs and binarizes both fonts at arch.image_size into out_dir/source and
 * out_dir/target, and writes out_dir/split.txt and out_dir/config.ini. */
GG_API gg_status gg_prepare(const gg_config* config, const char* source_dir, const char* target_dir,
                            const char* out_dir, gg_prepare_summary* summary);

typedef struct {
  int64_t steps;
  int epochs;
  double final_l_d;
  double final_l1;
  double final_l_g;
} gg_train_summary;

/* Trains on the train_<train_size> set of a prepared directory; 0 picks the
 * largest. resume_checkpoint may be NULL. */
GG_API gg_status gg_train(const gg_config* config, const char* data_dir, int train_size, const char* out_dir,
                          const char* resume_checkpoint, gg_train_summary* summary);

typedef struct {
  int glyphs;
  int calibrated;           /* glyphs with a per-image threshold */
  int has_global_threshold;
  double global_threshold;
  double applied_threshold;
} gg_generate_summary;

/* Runs the generator over every glyph in source_dir, or only the [test]
 * codepoints when manifest is given. truth_dir (may be NULL) enables
 * threshold calibration. */
GG_API gg_status gg_generate(const gg_config* config, const char* checkpoint, const char* source_dir,
                             const char* truth_dir, const char* manifest, const char* out_dir,
                             gg_generate_summary* summary);

typedef struct {
  int evaluated;
  double mean_cr;
  double mean_ssim;
  int high;
  int medium;
  int low;
  int window;
  int generated_only;
  int truth_only;
  int skipped;
} gg_eval_summary;

/* Writes out_dir/metrics.csv and out_dir/metrics.txt. */
GG_API gg_status gg_evaluate(const gg_config* config, const char* generated_dir, const char* truth_dir,
                             const char* out_dir, gg_eval_summary* summary);

/* One model per train_<N> set of a prepared directory; out_dir/sweep.csv. */
GG_API gg_status gg_sweep(const gg_config* config, const char* data_dir, const char* out_dir, int* rows);

/* sheet.png, answer_key.txt, cells.csv and (optionally) answer.png. */
GG_API gg_status gg_turing_generate(const gg_config* config, const char* generated_dir, const char* truth_dir,
                                    const char* out_dir);
/* Writes the score report to out_path (may be NULL). */
GG_API gg_status gg_turing_score(const gg_config* config, const char* answer_key, const char* responses,
                                 const char* out_path, double* mean_accuracy, int* participants);

typedef struct {
  char op[64];
  int instances;
  double max_rel_error;
  int passed;
} gg_gradcheck_row;

/* Fills up to capacity rows; *count gets the total. */
GG_API gg_status gg_gradcheck(uint64_t seed, int instances, gg_gradcheck_row* rows, size_t capacity, size_t* count,
                              int* all_passed);

/* ---- metrics on raw buffers (row-major, 1 = ink) ------------------------ */

typedef struct {
  double cr;
  int dy;
  int dx;
  int n_valid;
  int n_over;
  int n_less;
} gg_coverage;

GG_API gg_status gg_coverage_rate(const uint8_t* generated, const uint8_t* truth, int height, int width, int window,
                                  int overlap_only, gg_coverage* out);
GG_API gg_status gg_ssim(const double* x, const double* y, size_t n, double k1, double k2, double dynamic_range,
                         double* out);
GG_API gg_status gg_per_image_threshold(const double* probabilities, size_t n, int n_valid, double* threshold,
                                        int* count_above);

/* ---- trained model ------------------------------------------------------ */

typedef struct gg_model gg_model;

GG_API gg_status gg_model_load(const char* checkpoint, gg_model** out);
GG_API void gg_model_destroy(gg_model* model);
GG_API int gg_model_image_size(const gg_model* model);
/* source: size*size binary pixels; probabilities: size*size outputs. */
GG_API gg_status gg_model_generate(gg_model* model, const uint8_t* source, float* probabilities);

#ifdef __cplusplus
}
#endif

#endif /* GLYPHGAN_H */
