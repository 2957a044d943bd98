#ifndef DADA_DADA_H
#define DADA_DADA_H

/* C interface to the DADA false-positive synthesis library.
 *
 * Every fallible call returns a dada_status; on failure a message is
 * available from dada_last_error() on the calling thread until the next
 * failing call. Objects are opaque handles released with their _free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DADA_API __declspec(dllexport)
#else
#define DADA_API __attribute__((visibility("default")))
#endif

typedef enum dada_status {
  DADA_OK = 0,
  DADA_ERR_INTERNAL = 1,
  DADA_ERR_INVALID_ARGUMENT = 2,
  DADA_ERR_DATA = 3,
  DADA_ERR_NUMERIC = 4
} dada_status;

typedef struct dada_config dada_config;
typedef struct dada_dataset dada_dataset;
typedef struct dada_denoiser dada_denoiser;
typedef struct dada_detector dada_detector;
typedef struct dada_records dada_records;

typedef struct dada_eval {
  int tp, fp, fn;
  double precision, recall, f1;
} dada_eval;

/* step is an iteration (denoiser) or epoch (detector); value is the loss. */
typedef void (*dada_progress_fn)(void* user, int64_t step, double value);

DADA_API const char* dada_last_error(void);
DADA_API const char* dada_version(void);
/* Frees strings returned through char** out-parameters. */
DADA_API void dada_string_free(char* s);

/* Configuration. path may be NULL for defaults (plus DADA_OUTPUT_ROOT). */
DADA_API dada_status dada_config_create(const char* path, dada_config** out);
DADA_API dada_status dada_config_set(dada_config* cfg, const char* key, const char* value);
DADA_API dada_status dada_config_get(const dada_config* cfg, const char* key, char** out);
DADA_API dada_status dada_config_dump(const dada_config* cfg, char** out);
DADA_API dada_status dada_config_validate(const dada_config* cfg);
DADA_API void dada_config_free(dada_config* cfg);

/* Datasets. split is one of "all", "train", "val", "test", "a", "b". */
DADA_API dada_status dada_dataset_generate(const dada_config* cfg, const char* out_dir, int force,
                                           dada_dataset** out);
DADA_API dada_status dada_dataset_open(const dada_config* cfg, const char* dir, dada_dataset** out);
DADA_API dada_status dada_dataset_count(const dada_dataset* ds, const char* split, size_t* out);
DADA_API void dada_dataset_free(dada_dataset* ds);

/* Background denoiser. iterations 0 uses the config value; resume may be NULL. */
DADA_API dada_status dada_denoiser_train(const dada_config* cfg, const dada_dataset* ds, const char* fold,
                                         int64_t iterations, const char* resume, dada_progress_fn progress,
                                         void* user, dada_denoiser** out);
DADA_API dada_status dada_denoiser_load(const char* path, dada_denoiser** out);
DADA_API dada_status dada_denoiser_save(const dada_denoiser* den, const char* path);
DADA_API const char* dada_denoiser_fold(const dada_denoiser* den);
DADA_API int64_t dada_denoiser_iteration(const dada_denoiser* den);
DADA_API void dada_denoiser_free(dada_denoiser* den);

/* Detector trained on a split, optionally extended with synthesized records (NULL for none). */
DADA_API dada_status dada_detector_train(const dada_config* cfg, const dada_dataset* ds, const char* split,
                                         const dada_records* extra, uint64_t seed, dada_progress_fn progress,
                                         void* user, dada_detector** out);
DADA_API dada_status dada_detector_load(const dada_config* cfg, const char* path, dada_detector** out);
DADA_API dada_status dada_detector_save(const dada_detector* det, const char* path);
DADA_API void dada_detector_free(dada_detector* det);

/* One synthesis per image of `split`, using for each image a denoiser trained
 * on the other fold. region_file may be NULL (sampled regions). */
DADA_API dada_status dada_synthesize(const dada_config* cfg, const dada_dataset* ds, const char* split,
                                     const dada_denoiser* const* denoisers, size_t n_denoisers,
                                     const dada_detector* det, double alpha, uint64_t seed,
                                     const char* region_file, int allow_same_fold, dada_records** out);
DADA_API size_t dada_records_count(const dada_records* recs);
DADA_API size_t dada_records_failure_count(const dada_records* recs);
/* Borrowed strings valid until the records are freed. */
DADA_API dada_status dada_records_failure(const dada_records* recs, size_t i, const char** source_id,
                                          const char** reason);
DADA_API dada_status dada_records_save(const dada_records* recs, const char* dir);
DADA_API dada_status dada_records_load(const char* dir, dada_records** out);
DADA_API void dada_records_free(dada_records* recs);

/* Metrics. */
DADA_API dada_status dada_evaluate(const dada_config* cfg, const dada_detector* det, const dada_dataset* ds,
                                   const char* split, dada_eval* out);
/* FID of records vs their source images in ds, and FPGR of det on the records. */
DADA_API dada_status dada_score_records(const dada_config* cfg, const dada_detector* det, const dada_dataset* ds,
                                        const dada_records* recs, double* fid, double* fpgr);
DADA_API double dada_f1(double precision, double recall);

#ifdef __cplusplus
}
#endif

#endif
