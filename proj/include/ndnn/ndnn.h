/* C interface to the network-of-DNNs library.
 *
 * All functions report failure through an ndnn_status code; the message of the
 * most recent failure on a context is available from ndnn_last_error. Strings
 * returned through char** out-parameters are heap allocated and must be
 * released with ndnn_string_free. Configuration is passed as JSON text using
 * the same schemas as the command-line tool; NULL or "" means defaults.
 */
#ifndef NDNN_H
#define NDNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NDNN_API __declspec(dllexport)
#else
#define NDNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ndnn_status {
  NDNN_OK = 0,
  NDNN_ERR_USAGE = 2,    /* invalid argument or configuration */
  NDNN_ERR_FORMAT = 3,   /* unreadable or inconsistent data / checkpoint */
  NDNN_ERR_CHECK = 4,    /* a verification (gradient check) failed */
  NDNN_ERR_INTERNAL = 5  /* anything else */
} ndnn_status;

typedef struct ndnn_context ndnn_context;
typedef struct ndnn_model ndnn_model;
typedef struct ndnn_dataset ndnn_dataset;

typedef void (*ndnn_log_fn)(const char* line, void* user);

NDNN_API const char* ndnn_version(void);

NDNN_API ndnn_status ndnn_context_create(ndnn_context** out);
NDNN_API void ndnn_context_destroy(ndnn_context* ctx);
/* Worker threads for compare (runs of different systems/seeds). Default 1. */
NDNN_API ndnn_status ndnn_context_set_threads(ndnn_context* ctx, unsigned threads);
/* Progress lines (one per epoch). NULL disables logging. */
NDNN_API ndnn_status ndnn_context_set_log(ndnn_context* ctx, ndnn_log_fn fn, void* user);
/* Message of the last failed call on ctx, "" if none. Valid until the next call. */
NDNN_API const char* ndnn_last_error(const ndnn_context* ctx);

NDNN_API void ndnn_string_free(char* s);

/* Generate train/dev/test NDNN-DS1 files and manifest.json in out_dir.
 * config_json: {"corpus": {...}, "contamination": {...}}. */
NDNN_API ndnn_status ndnn_gen_data(ndnn_context* ctx, const char* config_json, const char* out_dir,
                                   char** manifest_json);

/* Train one system. experiment_json: {"system", "train": {...}, "hidden",
 * "se_dropout", "sr_dropout", "preset"}. Writes epochs.csv, checkpoint.ndnn,
 * metrics.json and manifest.json to out_dir; metrics_json receives the test
 * metrics of the best-dev checkpoint. */
NDNN_API ndnn_status ndnn_train(ndnn_context* ctx, const char* experiment_json,
                                const char* data_dir, const char* out_dir, char** metrics_json);

/* Evaluate a checkpoint on a split ("train", "dev" or "test"); level < 0
 * reports every level. */
NDNN_API ndnn_status ndnn_eval(ndnn_context* ctx, const char* checkpoint, const char* data_dir,
                               const char* split, int level, char** metrics_json);

/* Finite-difference check of every own and cross gradient on a tiny graph.
 * options_json: {"levels", "residual", "deep_cross_grads", "tolerance",
 * "step", "batch", "seed"}. Returns NDNN_ERR_CHECK when the check fails;
 * report_json is filled in either case. */
NDNN_API ndnn_status ndnn_gradcheck(ndnn_context* ctx, const char* options_json,
                                    char** report_json);

/* Train every system for every seed and write summary.csv, runs.csv and
 * report.txt to out_dir. report_json holds the per-row aggregates and the
 * text table. */
NDNN_API ndnn_status ndnn_compare(ndnn_context* ctx, const char* experiment_json,
                                  const char* data_dir, const uint64_t* seeds, size_t n_seeds,
                                  const char* out_dir, char** report_json);

/* Checkpoint handle. */
NDNN_API ndnn_status ndnn_model_load(ndnn_context* ctx, const char* checkpoint, ndnn_model** out);
NDNN_API void ndnn_model_free(ndnn_model* model);
/* {"system", "levels", "graph": {...}, "parameters"} */
NDNN_API ndnn_status ndnn_model_info(ndnn_context* ctx, const ndnn_model* model, char** info_json);

/* Dataset handle (one split file). */
NDNN_API ndnn_status ndnn_dataset_load(ndnn_context* ctx, const char* path, ndnn_dataset** out);
NDNN_API void ndnn_dataset_free(ndnn_dataset* ds);
/* {"utterances", "frames", "feat_dim", "n_mono", "n_cd", "normalized"} */
NDNN_API ndnn_status ndnn_dataset_info(ndnn_context* ctx, const ndnn_dataset* ds, char** info_json);

/* Per-level metrics of a model on a dataset, windowed with the model's
 * context sizes and the dataset's stored normalization. */
NDNN_API ndnn_status ndnn_model_evaluate(ndnn_context* ctx, const ndnn_model* model,
                                         const ndnn_dataset* ds, char** metrics_json);

/* Decode windowed inputs: rows × (ctx_in·feat_dim) doubles, row-major.
 * Writes one cd label per row for the given level (< 0: top level). */
NDNN_API ndnn_status ndnn_model_decode(ndnn_context* ctx, const ndnn_model* model,
                                       const double* inputs, size_t rows, size_t cols, int level,
                                       uint32_t* labels);

#ifdef __cplusplus
}
#endif

#endif /* NDNN_H */
