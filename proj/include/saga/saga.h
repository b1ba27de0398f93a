/*
 * C API for the spoofing-robust speaker-verification fusion library.
 *
 * All functions return saga_status; outputs are passed through pointers.
 * Objects are opaque handles created by saga_*_ functions and released with
 * the matching saga_*_free. Handles are not thread-safe; the error message
 * buffer is thread-local.
 */
#ifndef SAGA_SAGA_H
#define SAGA_SAGA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum saga_status {
  SAGA_OK = 0,
  SAGA_ERR_INVALID_ARG = 1, /* violated precondition or bad argument */
  SAGA_ERR_IO = 2,          /* missing file, failed read/write */
  SAGA_ERR_PARSE = 3,       /* malformed store/checkpoint/config/protocol */
  SAGA_ERR_INTERNAL = 4
} saga_status;

/* Message for the most recent failure on the calling thread. */
const char* saga_last_error(void);

/* ------------------------------------------------------------------ */
/* Opaque handles                                                      */
/* ------------------------------------------------------------------ */

typedef struct saga_store saga_store;   /* embedding store */
typedef struct saga_trials saga_trials; /* trial protocol */
typedef struct saga_model saga_model;   /* fusion model */
typedef struct saga_scores saga_scores; /* per-trial score set */

/* ------------------------------------------------------------------ */
/* Configuration structs (plain C, filled with *_default first)        */
/* ------------------------------------------------------------------ */

typedef struct saga_synth_config {
  uint32_t n_speakers;
  uint32_t utts_per_speaker;
  uint32_t spoofs_per_speaker;
  uint32_t asv_dim;
  uint32_t cm_dim;
  double speaker_noise;
  double spoof_mimicry;
  double cm_separation;
  uint64_t seed;
} saga_synth_config;

/* strategy: 0 = s1 (early gating), 1 = s2 (late gating), 2 = s3 (score
 * fusion) */
typedef struct saga_model_config {
  int strategy;
  uint32_t asv_dim;
  uint32_t cm_dim;
  uint32_t hidden_cm;   /* 0: default to cm_dim */
  uint32_t hidden_asv;  /* 0: default to asv_dim */
  uint32_t hidden_post; /* 0: default to asv_dim */
  int use_batchnorm;
  double dropout_rate;
  uint64_t seed;
} saga_model_config;

typedef struct saga_trial_quotas {
  uint32_t per_utt_targets;
  uint32_t per_utt_nontargets;
  uint32_t per_utt_spoofs;
  uint32_t enroll_size;
} saga_trial_quotas;

typedef struct saga_optim_config {
  int kind; /* 0 = sgd, 1 = adam */
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
} saga_optim_config;

typedef struct saga_train_options {
  uint32_t epochs;
  uint32_t batch_size;
  double lambda_weight; /* weight on the SASV loss term */
  uint64_t seed;
  saga_optim_config optimizer;
} saga_train_options;

typedef struct saga_atmm_options {
  uint32_t rounds;
  uint32_t iters_per_round;
  double sample_fraction;
  double lambda_cm_focus;
  double lambda_asv_focus;
  uint32_t batch_size;
  uint64_t seed;
  saga_optim_config optimizer;
} saga_atmm_options;

typedef struct saga_adcf_config {
  double pi_tar;
  double pi_non;
  double pi_spf;
  double c_miss;
  double c_fa_non;
  double c_fa_spf;
} saga_adcf_config;

typedef struct saga_ci_result {
  double point;
  double lower;
  double upper;
  uint32_t replicates;
  double level;
} saga_ci_result;

/* Full run configuration: desk-scale defaults, optionally overridden from a
 * `key = value` config file. */
typedef struct saga_run_config {
  saga_synth_config gen;
  saga_model_config model; /* asv_dim/cm_dim 0: take from the store */
  saga_trial_quotas quotas;
  uint32_t eval_quota; /* per-utterance quota for evaluation protocols */
  uint64_t trials_seed;
  int use_atmm;
  saga_train_options train;
  saga_atmm_options atmm;
  uint32_t eval_replicates;
  double eval_level;
  uint64_t eval_seed;
  uint32_t hist_bins;
  saga_adcf_config adcf;
} saga_run_config;

void saga_synth_config_default(saga_synth_config* out);
void saga_model_config_default(saga_model_config* out);
void saga_trial_quotas_default(saga_trial_quotas* out);
void saga_optim_config_default(saga_optim_config* out);
void saga_train_options_default(saga_train_options* out);
void saga_atmm_options_default(saga_atmm_options* out);
void saga_adcf_config_default(saga_adcf_config* out);
void saga_run_config_default(saga_run_config* out);

saga_status saga_run_config_load(const char* path, saga_run_config* out);
/* Applies a single `key`/`value` pair using the config-file vocabulary. */
saga_status saga_run_config_set(saga_run_config* cfg, const char* key,
                                const char* value);

/* ------------------------------------------------------------------ */
/* Embedding store                                                     */
/* ------------------------------------------------------------------ */

saga_status saga_store_generate(const saga_synth_config* cfg,
                                saga_store** out);
saga_status saga_store_read(const char* path, saga_store** out);
saga_status saga_store_write(const saga_store* store, const char* path);
saga_status saga_store_write_metadata(const saga_store* store,
                                      const char* path);
void saga_store_free(saga_store* store);

uint32_t saga_store_asv_dim(const saga_store* store);
uint32_t saga_store_cm_dim(const saga_store* store);
uint64_t saga_store_size(const saga_store* store);

/* ------------------------------------------------------------------ */
/* Trial protocols                                                     */
/* ------------------------------------------------------------------ */

/* Target / zero-effort non-target / spoof trials (countermeasure side and
 * evaluation protocols). */
saga_status saga_trials_build_cm(const saga_store* store,
                                 const saga_trial_quotas* quotas,
                                 uint64_t seed, saga_trials** out);
/* Target / non-target only (speaker-verification side). */
saga_status saga_trials_build_asv(const saga_store* store,
                                  const saga_trial_quotas* quotas,
                                  uint64_t seed, saga_trials** out);
saga_status saga_trials_concat(const saga_trials* a, const saga_trials* b,
                               saga_trials** out);
saga_status saga_trials_read(const char* path, saga_trials** out);
saga_status saga_trials_write(const saga_trials* trials, const char* path);
void saga_trials_free(saga_trials* trials);
uint64_t saga_trials_size(const saga_trials* trials);
/* counts[0] targets, counts[1] nontargets, counts[2] spoofs */
saga_status saga_trials_counts(const saga_trials* trials, uint64_t counts[3]);

/* ------------------------------------------------------------------ */
/* Model and training                                                  */
/* ------------------------------------------------------------------ */

saga_status saga_model_create(const saga_model_config* cfg, saga_model** out);
saga_status saga_model_read(const char* path, saga_model** out);
saga_status saga_model_write(const saga_model* model, const char* path);
void saga_model_free(saga_model* model);

/* Minibatch training over a merged trial list with a fixed loss weight.
 * report_path may be NULL. */
saga_status saga_train_conventional(saga_model* model, const saga_store* store,
                                    const saga_trials* merged,
                                    const saga_train_options* options,
                                    const char* report_path);

/* Alternating multi-task training over the two datasets. report_path may be
 * NULL. */
saga_status saga_train_atmm(saga_model* model, const saga_store* store,
                            const saga_trials* cm_trials,
                            const saga_trials* asv_trials,
                            const saga_atmm_options* options,
                            const char* report_path);

/* ------------------------------------------------------------------ */
/* Scoring and metrics                                                 */
/* ------------------------------------------------------------------ */

saga_status saga_export_scores(const saga_model* model,
                               const saga_store* store,
                               const saga_trials* trials, saga_scores** out);
saga_status saga_scores_read(const char* path, saga_scores** out);
saga_status saga_scores_write(const saga_scores* scores, const char* path);
void saga_scores_free(saga_scores* scores);
uint64_t saga_scores_size(const saga_scores* scores);

saga_status saga_scores_eer(const saga_scores* scores, double* eer,
                            double* threshold);
saga_status saga_scores_min_adcf(const saga_scores* scores,
                                 const saga_adcf_config* cfg, double* value,
                                 double* threshold);
/* metric: 0 = SASV-EER, 1 = min a-DCF */
saga_status saga_scores_bootstrap(const saga_scores* scores, int metric,
                                  const saga_adcf_config* cfg,
                                  uint32_t replicates, double level,
                                  uint64_t seed, saga_ci_result* out);
/* Writes the metric report TSV (EER and min a-DCF with bootstrap CIs). */
saga_status saga_scores_report(const saga_scores* scores,
                               const saga_adcf_config* cfg,
                               uint32_t replicates, double level,
                               uint64_t seed, const char* path);
/* Per-class score histogram CSV over [0,1]. */
saga_status saga_scores_histogram_csv(const saga_scores* scores,
                                      uint32_t bins, const char* path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SAGA_SAGA_H */
