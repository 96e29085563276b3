/* Copyright 2026 The streamkd Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the streamkd library.
 *
 * Every fallible call returns an skd_status. On failure a message is kept
 * per thread and can be read with skd_last_error() until the next call on
 * that thread. Strings returned through char** are heap-allocated and must
 * be released with skd_free_string(). Handles are released with their
 * matching *_free function; passing NULL to a free function is a no-op.
 */

#ifndef STREAMKD_STREAMKD_H_
#define STREAMKD_STREAMKD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SKD_API __declspec(dllexport)
#elif defined(STREAMKD_BUILDING_LIBRARY)
#define SKD_API __attribute__((visibility("default")))
#else
#define SKD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum skd_status {
  SKD_OK = 0,
  SKD_INVALID_ARGUMENT = 1,
  SKD_IO = 2,
  SKD_FORMAT = 3,
  SKD_CONFIG_MISMATCH = 4,
  SKD_UNSATISFIABLE = 5,
  SKD_EMPTY_RECEPTION_FIELD = 6,
  SKD_NUMERIC = 7,
  SKD_MISSING_STAGE = 8,
  SKD_INTERNAL = 9
} skd_status;

SKD_API const char* skd_version(void);
SKD_API const char* skd_status_name(skd_status status);
SKD_API const char* skd_last_error(void);
SKD_API void skd_free_string(char* s);

/* ---- configuration ---------------------------------------------------- */

typedef struct skd_config skd_config;

/* A configuration holding every registry default. */
SKD_API skd_status skd_config_new(skd_config** out);
SKD_API void skd_config_free(skd_config* config);
/* Applies key=value lines from a file; unknown keys are rejected. */
SKD_API skd_status skd_config_merge_file(skd_config* config, const char* path);
SKD_API skd_status skd_config_set(skd_config* config, const char* key,
                                  const char* value);
SKD_API skd_status skd_config_get(const skd_config* config, const char* key,
                                  char** value);
SKD_API skd_status skd_config_resolved(const skd_config* config, char** text);
SKD_API skd_status skd_config_digest(const skd_config* config, char** hex);
/* Registry listing: "key<TAB>default<TAB>help" lines. */
SKD_API skd_status skd_config_keys(char** text);

/* ---- masks and latency ------------------------------------------------ */

typedef enum skd_variant {
  SKD_BIDIRECTIONAL = 0,
  SKD_TIME_RESTRICTED = 1,
  SKD_CHUNK = 2,
  SKD_BLOCK = 3
} skd_variant;

typedef struct skd_mask_spec {
  int variant;       /* skd_variant */
  int chunk_frames;  /* chunk and block */
  int future_frames; /* block */
  int right_frames;  /* time_restricted, per layer */
  int left_limit;    /* negative: unlimited */
  double frame_ms;
} skd_mask_spec;

/* Bidirectional, 20 ms frames. */
SKD_API void skd_mask_spec_init(skd_mask_spec* spec);
SKD_API skd_status skd_parse_variant(const char* name, int* variant);
SKD_API skd_status skd_mask_spec_from_config(const skd_config* config,
                                             skd_mask_spec* spec);
SKD_API skd_status skd_mask_spec_format(const skd_mask_spec* spec, char** text);
/* EIL in milliseconds; +infinity for the bidirectional variant. */
SKD_API skd_status skd_eil_ms(const skd_mask_spec* spec, size_t layers,
                              double* eil_ms);
/* Plain-text latency table and the tab-separated machine line. Either output
 * may be NULL. */
SKD_API skd_status skd_latency_report(const skd_mask_spec* spec, size_t layers,
                                      char** table, char** line);
/* Per-frame reception field after `layers` layers; arrays hold `frames`. */
SKD_API skd_status skd_reception_field(const skd_mask_spec* spec, size_t layers,
                                       size_t frames, size_t* earliest,
                                       size_t* latest);
/* The realized mask as an 'x' / '.' grid (augmented layout for block). */
SKD_API skd_status skd_mask_render(const skd_mask_spec* spec, size_t frames,
                                   size_t layer, char** grid);

/* ---- data ------------------------------------------------------------- */

typedef struct skd_dataset skd_dataset;

typedef enum skd_split {
  SKD_SPLIT_LABELED = 0,
  SKD_SPLIT_UNLABELED = 1,
  SKD_SPLIT_DEV = 2
} skd_split;

SKD_API skd_status skd_dataset_generate(const skd_config* config,
                                        skd_dataset** out);
SKD_API skd_status skd_dataset_load(const char* path, skd_dataset** out);
SKD_API skd_status skd_dataset_save(const skd_dataset* data, const char* path);
SKD_API void skd_dataset_free(skd_dataset* data);
SKD_API skd_status skd_dataset_count(const skd_dataset* data, int split,
                                     size_t* count);
/* "id<TAB>text" lines of a split: labels, or hidden references when
 * `references` is non-zero. */
SKD_API skd_status skd_dataset_transcripts(const skd_dataset* data, int split,
                                           int references, char** tsv);
/* Validates a container file's index; returns its record count. */
SKD_API skd_status skd_dataset_validate_file(const char* path, size_t* count);

/* ---- language model --------------------------------------------------- */

typedef struct skd_lm skd_lm;

/* Trains on the labeled transcripts of `data` (may be NULL), the lines of
 * `text_path` (may be NULL), and lm.corpus lexicon sentences. */
SKD_API skd_status skd_lm_train(const skd_config* config, const skd_dataset* data,
                                const char* text_path, skd_lm** out);
SKD_API skd_status skd_lm_load(const char* path, skd_lm** out);
SKD_API skd_status skd_lm_save(const skd_lm* lm, const char* path);
SKD_API skd_status skd_lm_score(const skd_lm* lm, const char* text,
                                double* log_prob);
SKD_API void skd_lm_free(skd_lm* lm);

/* ---- models ----------------------------------------------------------- */

typedef struct skd_model skd_model;

SKD_API skd_status skd_model_init(const skd_config* config, uint64_t seed,
                                  skd_model** out);
SKD_API skd_status skd_model_load(const char* path, skd_model** out);
SKD_API skd_status skd_model_save(const skd_model* model, const char* path);
SKD_API skd_status skd_model_digest(const skd_model* model, char** hex);
SKD_API skd_status skd_model_mask(const skd_model* model, skd_mask_spec* spec);
SKD_API void skd_model_free(skd_model* model);

/* ---- training stages -------------------------------------------------- */

typedef struct skd_report skd_report;

/* Reports carry a JSON document and named numbers ("dev_ter", ...). */
SKD_API skd_status skd_report_json(const skd_report* report, char** json);
SKD_API skd_status skd_report_text(const skd_report* report, char** text);
SKD_API skd_status skd_report_metric(const skd_report* report, const char* name,
                                     double* value);
SKD_API void skd_report_free(skd_report* report);

/* Training settings (schedule, batch, seed, jobs) come from `config`;
 * `updates` overrides the budget. Reports may be NULL. */
SKD_API skd_status skd_finetune(const skd_config* config, const skd_model* init,
                                const skd_mask_spec* spec,
                                const skd_dataset* data, size_t updates,
                                skd_model** out, skd_report** report);
SKD_API skd_status skd_guided_teacher(const skd_config* config,
                                      const skd_model* pretrained,
                                      const skd_model* streaming,
                                      const skd_dataset* data, double alpha,
                                      size_t updates, skd_model** out,
                                      skd_report** report);
SKD_API skd_status skd_distill(const skd_config* config,
                               const skd_model* pretrained,
                               const skd_model* teacher,
                               const skd_model* head_source,
                               const skd_mask_spec* spec,
                               const skd_dataset* data, size_t updates,
                               skd_model** out, skd_report** report);
/* Decodes the unlabeled split; the result holds the pseudo-labeled U'. */
SKD_API skd_status skd_pseudo_label(const skd_config* config,
                                    const skd_model* model, const skd_lm* lm,
                                    const skd_dataset* data, skd_dataset** out,
                                    skd_report** report);
/* CTC on the labeled split of `data` plus the pseudo-labeled set. */
SKD_API skd_status skd_self_train(const skd_config* config,
                                  const skd_model* model,
                                  const skd_dataset* data,
                                  const skd_dataset* pseudo, size_t updates,
                                  skd_model** out, skd_report** report);

enum { SKD_PIPELINE_DRY_RUN = 1, SKD_PIPELINE_RESUME = 2 };

/* Runs the six stages into `out_dir`. With `log` set, progress lines go to
 * it. */
SKD_API skd_status skd_pipeline_run(const skd_config* config,
                                    const char* out_dir, int flags,
                                    void (*log)(const char* line, void* user),
                                    void* user, skd_report** report);
/* Runs one named stage (S, T, KD, N, U', ST, ...) from artifacts present in
 * `out_dir`. */
SKD_API skd_status skd_pipeline_stage(const skd_config* config,
                                      const char* out_dir, const char* stage,
                                      skd_report** report);

/* ---- decoding and metrics --------------------------------------------- */

typedef struct skd_decode_options {
  size_t beam;      /* ignored when greedy */
  double lm_weight; /* used only with an LM */
  double penalty;   /* used only with an LM */
  size_t nbest;
  int greedy;
} skd_decode_options;

/* "id<TAB>rank<TAB>combined<TAB>acoustic<TAB>lm<TAB>text" lines for every
 * utterance of `split`. `lm` may be NULL. */
SKD_API skd_status skd_decode(const skd_model* model, const skd_dataset* data,
                              int split, const skd_lm* lm,
                              const skd_decode_options* options, size_t jobs,
                              char** tsv);
/* Greedy token error rate of `split` against labels or references. */
SKD_API skd_status skd_token_error_rate(const skd_model* model,
                                        const skd_dataset* data, int split,
                                        double* rate);
/* Word and character error rates. Inputs are lines of "text" or of tab-
 * separated columns whose first is the id and last is the text; when every
 * line has an id, lines are matched by id, otherwise by position. */
SKD_API skd_status skd_score(const char* ref_text, const char* hyp_text,
                             double* wer, double* cer, size_t* utterances);
/* Posteriorgram CSV of utterance `id` (any split). */
SKD_API skd_status skd_posteriors_csv(const skd_model* model,
                                      const skd_dataset* data, const char* id,
                                      char** csv);
SKD_API skd_status skd_frame_agreement(const skd_model* a, const skd_model* b,
                                       const skd_dataset* data, int split,
                                       double* agreement);

/* Built-in oracle checks; `passed` is 1 when all pass. */
SKD_API skd_status skd_selfcheck(uint64_t seed, char** text, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* STREAMKD_STREAMKD_H_ */
