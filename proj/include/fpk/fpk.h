/* fpk: frozen-feature linear-probe harness, C interface.
 *
 * Every function that can fail returns an fpk_status. On failure a message is
 * available from fpk_last_error() on the calling thread until the next call
 * into the library from that thread. Handles are opaque and must be released
 * with their matching *_free function; *_free(NULL) is a no-op.
 */
#ifndef FPK_FPK_H
#define FPK_FPK_H

#include <stddef.h>
#include <stdint.h>

#if defined(FPK_BUILDING_LIBRARY)
#define FPK_API __attribute__((visibility("default")))
#else
#define FPK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fpk_status {
  FPK_OK = 0,
  FPK_ERR_IO = 1,
  FPK_ERR_NON_FINITE_VALUE = 2,
  FPK_ERR_BAD_MAGIC = 3,
  FPK_ERR_VERSION_UNSUPPORTED = 4,
  FPK_ERR_DIGEST_MISMATCH = 5,
  FPK_ERR_TRUNCATED_FILE = 6,
  FPK_ERR_SCHEMA = 7,
  FPK_ERR_HASH_MISMATCH = 8,
  FPK_ERR_SPLIT_LEAK = 9,
  FPK_ERR_LABEL_INCONSISTENT = 10,
  FPK_ERR_EMPTY_SELECTION = 11,
  FPK_ERR_DIM_MISMATCH = 12,
  FPK_ERR_ZERO_VECTOR = 13,
  FPK_ERR_TOO_FEW_ROWS = 14,
  FPK_ERR_EIGEN_FAILURE = 15,
  FPK_ERR_AFFINE_FILE_MISSING = 16,
  FPK_ERR_CACHE_CORRUPT = 17,
  FPK_ERR_SINGLE_CLASS_SPLIT = 18,
  FPK_ERR_NON_FINITE_LOSS = 19,
  FPK_ERR_MISSING_SPLIT = 20,
  FPK_ERR_UNKNOWN_MANIPULATION = 21,
  FPK_ERR_EMPTY_HELD_OUT = 22,
  FPK_ERR_SINGLE_CLASS = 23,
  FPK_ERR_NO_POSITIVES = 24,
  FPK_ERR_MISSING_ARTIFACTS = 25,
  FPK_ERR_CONFIG = 26,
  FPK_ERR_INVALID_ARGUMENT = 27,
  FPK_ERR_INTERNAL = 28
} fpk_status;

typedef enum fpk_metric {
  FPK_METRIC_AUC = 0,
  FPK_METRIC_AP = 1,
  FPK_METRIC_EER = 2,
  FPK_METRIC_FPR95 = 3
} fpk_metric;

FPK_API const char* fpk_version(void);
FPK_API const char* fpk_status_name(fpk_status status);
FPK_API const char* fpk_last_error(void);

/* Receives one line of progress or diagnostic text (no trailing newline). */
typedef void (*fpk_message_fn)(const char* line, void* user);

/* Feature matrices (FPK1 files). */
typedef struct fpk_features fpk_features;

FPK_API fpk_status fpk_features_create(size_t rows, size_t dim, const float* values, fpk_features** out);
FPK_API fpk_status fpk_features_read(const char* path, fpk_features** out);
FPK_API fpk_status fpk_features_write(const fpk_features* features, const char* path);
FPK_API size_t fpk_features_rows(const fpk_features* features);
FPK_API size_t fpk_features_dim(const fpk_features* features);
/* Row-major rows x dim; valid for the life of the handle. */
FPK_API const float* fpk_features_data(const fpk_features* features);
/* Payload SHA-256 as 64 lowercase hex chars plus NUL. */
FPK_API fpk_status fpk_features_digest(const fpk_features* features, char hex[65]);
FPK_API void fpk_features_free(fpk_features* features);

/* Sample manifests (CSV with hash footer). */
typedef struct fpk_manifest fpk_manifest;

FPK_API fpk_status fpk_manifest_read(const char* path, fpk_manifest** out);
FPK_API size_t fpk_manifest_size(const fpk_manifest* manifest);
FPK_API fpk_status fpk_manifest_hash(const fpk_manifest* manifest, char hex[65]);
FPK_API fpk_status fpk_check_paired(const fpk_features* features, const fpk_manifest* manifest);
FPK_API void fpk_manifest_free(fpk_manifest* manifest);

/* Feature conditioners. `kind` is one of "LN", "LN-Affine", "L2",
 * "Feature-Std", "PCA-Whiten". pca_components = 0 keeps full rank.
 * affine_path may be NULL except for LN-Affine. */
typedef struct fpk_conditioner fpk_conditioner;

typedef struct fpk_conditioner_options {
  const char* kind;
  double ln_eps;
  double pca_eps;
  size_t pca_components;
  const char* affine_path;
} fpk_conditioner_options;

FPK_API void fpk_conditioner_options_init(fpk_conditioner_options* options);
/* Fits on every row of `train`. `train_manifest` may be NULL; when given its
 * hash enters the fit key. `cache_dir` may be NULL to skip caching. */
FPK_API fpk_status fpk_conditioner_fit(const fpk_features* train, const fpk_manifest* train_manifest,
                                       const fpk_conditioner_options* options, const char* cache_dir,
                                       fpk_conditioner** out);
FPK_API fpk_status fpk_conditioner_read(const char* path, fpk_conditioner** out);
FPK_API fpk_status fpk_conditioner_write(const fpk_conditioner* conditioner, const char* path);
FPK_API size_t fpk_conditioner_input_dim(const fpk_conditioner* conditioner);
FPK_API size_t fpk_conditioner_output_dim(const fpk_conditioner* conditioner);
/* y must hold output_dim doubles. */
FPK_API fpk_status fpk_conditioner_apply(const fpk_conditioner* conditioner, const double* x, size_t x_len, double* y,
                                         size_t y_len);
FPK_API fpk_status fpk_conditioner_digest(const fpk_conditioner* conditioner, char hex[65]);
FPK_API void fpk_conditioner_free(fpk_conditioner* conditioner);

/* Trained linear probes (FPKP files). */
typedef struct fpk_probe fpk_probe;

FPK_API fpk_status fpk_probe_read(const char* path, fpk_probe** out);
FPK_API size_t fpk_probe_dim(const fpk_probe* probe);
FPK_API const double* fpk_probe_weights(const fpk_probe* probe);
FPK_API double fpk_probe_bias(const fpk_probe* probe);
FPK_API size_t fpk_probe_best_epoch(const fpk_probe* probe);
/* Logit w.x + b for one conditioned row. */
FPK_API fpk_status fpk_probe_score(const fpk_probe* probe, const double* x, size_t x_len, double* out);
FPK_API void fpk_probe_free(fpk_probe* probe);

/* Metrics over one score per unit; labels are 0 (real) or 1 (fake). */
FPK_API fpk_status fpk_metric_compute(const double* scores, const int* labels, size_t n, fpk_metric metric,
                                      double* out);
/* Class-stratified percentile bootstrap. */
FPK_API fpk_status fpk_bootstrap_ci(const double* scores, const int* labels, size_t n, fpk_metric metric,
                                    size_t n_boot, uint64_t seed, double level, double* lo, double* hi);
/* Number of ROC points, then fills up to `capacity` of them. Pass NULL
 * buffers to query the count. The first point has threshold +inf. */
FPK_API fpk_status fpk_roc_curve(const double* scores, const int* labels, size_t n, double* thresholds, double* fpr,
                                 double* tpr, size_t capacity, size_t* count);

/* Experiment commands driven by a JSON config file. */
typedef struct fpk_command_options {
  const char* config_path;
  const char* output_dir; /* NULL keeps the config's value */
  int override_seed;
  uint64_t seed;
  int force;
  size_t jobs;           /* 0 keeps the config's value */
  const char* condition; /* NULL runs every configured condition */
  fpk_message_fn log;
  void* log_user;
} fpk_command_options;

typedef struct fpk_sweep_summary {
  size_t executed;
  size_t skipped;
  size_t failed;
} fpk_sweep_summary;

FPK_API void fpk_command_options_init(fpk_command_options* options);
/* Each diagnostic goes to `log` as "ok|FAIL <check> <location>: <detail>".
 * *all_ok is set to 1 when every check passed. */
FPK_API fpk_status fpk_validate_config(const fpk_command_options* options, int* all_ok);
/* Either path may be NULL. */
FPK_API fpk_status fpk_validate_files(const char* features_path, const char* manifest_path, fpk_message_fn log,
                                      void* log_user, int* all_ok);
/* Returns FPK_OK even when individual jobs fail; see summary->failed. */
FPK_API fpk_status fpk_sweep(const fpk_command_options* options, fpk_sweep_summary* summary);
FPK_API fpk_status fpk_fit_conditioners(const fpk_command_options* options);
FPK_API fpk_status fpk_train(const fpk_command_options* options);
FPK_API fpk_status fpk_evaluate(const fpk_command_options* options);
FPK_API fpk_status fpk_report(const char* output_dir, fpk_message_fn log, void* log_user);
/* Same, with the output directory taken from the config (or its override). */
FPK_API fpk_status fpk_report_config(const fpk_command_options* options);

/* Writes a synthetic fixture and its config.json into `dir`.
 * preset is "shift" or "separable". */
FPK_API fpk_status fpk_synth_fixture(const char* dir, const char* preset, uint64_t seed, fpk_message_fn log,
                                     void* log_user);

#ifdef __cplusplus
}
#endif

#endif /* FPK_FPK_H */
