#include "saga/saga.h"

#include <string>
#include <utility>
#include <vector>

#include "saga/config.hpp"
#include "saga/errors.hpp"
#include "saga/metrics.hpp"
#include "saga/model.hpp"
#include "saga/store.hpp"
#include "saga/training.hpp"
#include "saga/trials.hpp"

struct saga_store {
  saga::EmbeddingStore impl;
};
struct saga_trials {
  std::vector<saga::Trial> impl;
};
struct saga_model {
  saga::FusionModel impl;
};
struct saga_scores {
  saga::ScoreSet impl;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

template <typename Fn>
saga_status guarded(Fn&& fn) {
  try {
    fn();
    return SAGA_OK;
  } catch (const saga::ParseError& e) {
    set_error(e.what());
    return SAGA_ERR_PARSE;
  } catch (const saga::IoError& e) {
    set_error(e.what());
    return SAGA_ERR_IO;
  } catch (const saga::ContractViolation& e) {
    set_error(e.what());
    return SAGA_ERR_INVALID_ARG;
  } catch (const std::exception& e) {
    set_error(e.what());
    return SAGA_ERR_INTERNAL;
  }
}

saga_status invalid(const char* message) {
  set_error(message);
  return SAGA_ERR_INVALID_ARG;
}

saga::SynthConfig to_cpp(const saga_synth_config& c) {
  saga::SynthConfig out;
  out.n_speakers = c.n_speakers;
  out.utts_per_speaker = c.utts_per_speaker;
  out.spoofs_per_speaker = c.spoofs_per_speaker;
  out.asv_dim = c.asv_dim;
  out.cm_dim = c.cm_dim;
  out.speaker_noise = c.speaker_noise;
  out.spoof_mimicry = c.spoof_mimicry;
  out.cm_separation = c.cm_separation;
  out.seed = c.seed;
  return out;
}

void from_cpp(const saga::SynthConfig& c, saga_synth_config& out) {
  out.n_speakers = static_cast<uint32_t>(c.n_speakers);
  out.utts_per_speaker = static_cast<uint32_t>(c.utts_per_speaker);
  out.spoofs_per_speaker = static_cast<uint32_t>(c.spoofs_per_speaker);
  out.asv_dim = static_cast<uint32_t>(c.asv_dim);
  out.cm_dim = static_cast<uint32_t>(c.cm_dim);
  out.speaker_noise = c.speaker_noise;
  out.spoof_mimicry = c.spoof_mimicry;
  out.cm_separation = c.cm_separation;
  out.seed = c.seed;
}

saga::ModelConfig to_cpp(const saga_model_config& c) {
  saga::ModelConfig out;
  if (c.strategy < 0 || c.strategy > 2)
    throw saga::ContractViolation("strategy must be 0 (s1), 1 (s2) or 2 (s3)");
  out.strategy = static_cast<saga::Strategy>(c.strategy);
  out.asv_dim = c.asv_dim;
  out.cm_dim = c.cm_dim;
  out.hidden_cm = c.hidden_cm;
  out.hidden_asv = c.hidden_asv;
  out.hidden_post = c.hidden_post;
  out.use_batchnorm = c.use_batchnorm != 0;
  out.dropout_rate = c.dropout_rate;
  out.seed = c.seed;
  return out;
}

void from_cpp(const saga::ModelConfig& c, saga_model_config& out) {
  out.strategy = static_cast<int>(c.strategy);
  out.asv_dim = static_cast<uint32_t>(c.asv_dim);
  out.cm_dim = static_cast<uint32_t>(c.cm_dim);
  out.hidden_cm = static_cast<uint32_t>(c.hidden_cm);
  out.hidden_asv = static_cast<uint32_t>(c.hidden_asv);
  out.hidden_post = static_cast<uint32_t>(c.hidden_post);
  out.use_batchnorm = c.use_batchnorm ? 1 : 0;
  out.dropout_rate = c.dropout_rate;
  out.seed = c.seed;
}

saga::TrialQuotas to_cpp(const saga_trial_quotas& q) {
  return {q.per_utt_targets, q.per_utt_nontargets, q.per_utt_spoofs,
          q.enroll_size};
}

void from_cpp(const saga::TrialQuotas& q, saga_trial_quotas& out) {
  out.per_utt_targets = static_cast<uint32_t>(q.per_utt_targets);
  out.per_utt_nontargets = static_cast<uint32_t>(q.per_utt_nontargets);
  out.per_utt_spoofs = static_cast<uint32_t>(q.per_utt_spoofs);
  out.enroll_size = static_cast<uint32_t>(q.enroll_size);
}

saga::OptimizerConfig to_cpp(const saga_optim_config& c) {
  saga::OptimizerConfig out;
  if (c.kind < 0 || c.kind > 1)
    throw saga::ContractViolation("optimizer kind must be 0 (sgd) or 1 (adam)");
  out.kind = static_cast<saga::OptimizerKind>(c.kind);
  out.learning_rate = c.learning_rate;
  out.beta1 = c.beta1;
  out.beta2 = c.beta2;
  out.epsilon = c.epsilon;
  return out;
}

void from_cpp(const saga::OptimizerConfig& c, saga_optim_config& out) {
  out.kind = static_cast<int>(c.kind);
  out.learning_rate = c.learning_rate;
  out.beta1 = c.beta1;
  out.beta2 = c.beta2;
  out.epsilon = c.epsilon;
}

saga::AtmmConfig to_cpp(const saga_atmm_options& c) {
  saga::AtmmConfig out;
  out.rounds = c.rounds;
  out.iters_per_round = c.iters_per_round;
  out.sample_fraction = c.sample_fraction;
  out.lambda_cm_focus = c.lambda_cm_focus;
  out.lambda_asv_focus = c.lambda_asv_focus;
  out.batch_size = c.batch_size;
  out.seed = c.seed;
  return out;
}

void from_cpp(const saga::AtmmConfig& c, const saga::OptimizerConfig& opt,
              saga_atmm_options& out) {
  out.rounds = static_cast<uint32_t>(c.rounds);
  out.iters_per_round = static_cast<uint32_t>(c.iters_per_round);
  out.sample_fraction = c.sample_fraction;
  out.lambda_cm_focus = c.lambda_cm_focus;
  out.lambda_asv_focus = c.lambda_asv_focus;
  out.batch_size = static_cast<uint32_t>(c.batch_size);
  out.seed = c.seed;
  from_cpp(opt, out.optimizer);
}

saga::ADcfConfig to_cpp(const saga_adcf_config& c) {
  return {c.pi_tar, c.pi_non, c.pi_spf, c.c_miss, c.c_fa_non, c.c_fa_spf};
}

void from_cpp(const saga::ADcfConfig& c, saga_adcf_config& out) {
  out.pi_tar = c.pi_tar;
  out.pi_non = c.pi_non;
  out.pi_spf = c.pi_spf;
  out.c_miss = c.c_miss;
  out.c_fa_non = c.c_fa_non;
  out.c_fa_spf = c.c_fa_spf;
}

void from_cpp(const saga::RunConfig& c, saga_run_config& out) {
  from_cpp(c.gen, out.gen);
  from_cpp(c.model, out.model);
  from_cpp(c.quotas, out.quotas);
  out.eval_quota = static_cast<uint32_t>(c.eval_quota);
  out.trials_seed = c.trials_seed;
  out.use_atmm = c.use_atmm ? 1 : 0;
  out.train.epochs = static_cast<uint32_t>(c.epochs);
  out.train.batch_size = static_cast<uint32_t>(c.batch_size);
  out.train.lambda_weight = c.lambda;
  out.train.seed = c.train_seed;
  from_cpp(c.optimizer, out.train.optimizer);
  from_cpp(c.atmm, c.optimizer, out.atmm);
  out.eval_replicates = static_cast<uint32_t>(c.eval_replicates);
  out.eval_level = c.eval_level;
  out.eval_seed = c.eval_seed;
  out.hist_bins = static_cast<uint32_t>(c.hist_bins);
  from_cpp(c.adcf, out.adcf);
}

saga::RunConfig to_cpp(const saga_run_config& c) {
  saga::RunConfig out;
  out.gen = to_cpp(c.gen);
  out.model = to_cpp(c.model);
  out.quotas = to_cpp(c.quotas);
  out.eval_quota = c.eval_quota;
  out.trials_seed = c.trials_seed;
  out.use_atmm = c.use_atmm != 0;
  out.epochs = c.train.epochs;
  out.batch_size = c.train.batch_size;
  out.lambda = c.train.lambda_weight;
  out.train_seed = c.train.seed;
  out.optimizer = to_cpp(c.train.optimizer);
  out.atmm = to_cpp(c.atmm);
  out.eval_replicates = c.eval_replicates;
  out.eval_level = c.eval_level;
  out.eval_seed = c.eval_seed;
  out.hist_bins = c.hist_bins;
  out.adcf = to_cpp(c.adcf);
  return out;
}

}  // namespace

extern "C" {

const char* saga_last_error(void) { return g_last_error.c_str(); }

/* -------------------------------------------------------------------- */
/* Config defaults and loading                                           */
/* -------------------------------------------------------------------- */

void saga_synth_config_default(saga_synth_config* out) {
  if (out != nullptr) from_cpp(saga::SynthConfig{}, *out);
}

void saga_model_config_default(saga_model_config* out) {
  if (out != nullptr) from_cpp(saga::ModelConfig{}, *out);
}

void saga_trial_quotas_default(saga_trial_quotas* out) {
  if (out != nullptr) from_cpp(saga::TrialQuotas{}, *out);
}

void saga_optim_config_default(saga_optim_config* out) {
  if (out != nullptr) from_cpp(saga::OptimizerConfig{}, *out);
}

void saga_train_options_default(saga_train_options* out) {
  if (out == nullptr) return;
  const saga::RunConfig defaults;
  out->epochs = static_cast<uint32_t>(defaults.epochs);
  out->batch_size = static_cast<uint32_t>(defaults.batch_size);
  out->lambda_weight = defaults.lambda;
  out->seed = defaults.train_seed;
  from_cpp(defaults.optimizer, out->optimizer);
}

void saga_atmm_options_default(saga_atmm_options* out) {
  if (out != nullptr)
    from_cpp(saga::AtmmConfig{}, saga::OptimizerConfig{}, *out);
}

void saga_adcf_config_default(saga_adcf_config* out) {
  if (out != nullptr) from_cpp(saga::ADcfConfig{}, *out);
}

void saga_run_config_default(saga_run_config* out) {
  if (out != nullptr) from_cpp(saga::RunConfig{}, *out);
}

saga_status saga_run_config_load(const char* path, saga_run_config* out) {
  if (path == nullptr || out == nullptr)
    return invalid("saga_run_config_load: null argument");
  return guarded([&] { from_cpp(saga::load_run_config(path), *out); });
}

saga_status saga_run_config_set(saga_run_config* cfg, const char* key,
                                const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr)
    return invalid("saga_run_config_set: null argument");
  return guarded([&] {
    saga::RunConfig cpp = to_cpp(*cfg);
    saga::apply_config_entry(cpp, key, value);
    from_cpp(cpp, *cfg);
  });
}

/* -------------------------------------------------------------------- */
/* Store                                                                 */
/* -------------------------------------------------------------------- */

saga_status saga_store_generate(const saga_synth_config* cfg,
                                saga_store** out) {
  if (cfg == nullptr || out == nullptr)
    return invalid("saga_store_generate: null argument");
  return guarded([&] {
    *out = new saga_store{saga::generate(to_cpp(*cfg))};
  });
}

saga_status saga_store_read(const char* path, saga_store** out) {
  if (path == nullptr || out == nullptr)
    return invalid("saga_store_read: null argument");
  return guarded([&] { *out = new saga_store{saga::read_store(path)}; });
}

saga_status saga_store_write(const saga_store* store, const char* path) {
  if (store == nullptr || path == nullptr)
    return invalid("saga_store_write: null argument");
  return guarded([&] { saga::write_store(store->impl, path); });
}

saga_status saga_store_write_metadata(const saga_store* store,
                                      const char* path) {
  if (store == nullptr || path == nullptr)
    return invalid("saga_store_write_metadata: null argument");
  return guarded(
      [&] { saga::write_metadata_tsv(store->impl.metadata(), path); });
}

void saga_store_free(saga_store* store) { delete store; }

uint32_t saga_store_asv_dim(const saga_store* store) {
  return store == nullptr ? 0 : static_cast<uint32_t>(store->impl.asv_dim());
}

uint32_t saga_store_cm_dim(const saga_store* store) {
  return store == nullptr ? 0 : static_cast<uint32_t>(store->impl.cm_dim());
}

uint64_t saga_store_size(const saga_store* store) {
  return store == nullptr ? 0 : store->impl.size();
}

/* -------------------------------------------------------------------- */
/* Trials                                                                */
/* -------------------------------------------------------------------- */

saga_status saga_trials_build_cm(const saga_store* store,
                                 const saga_trial_quotas* quotas,
                                 uint64_t seed, saga_trials** out) {
  if (store == nullptr || quotas == nullptr || out == nullptr)
    return invalid("saga_trials_build_cm: null argument");
  return guarded([&] {
    *out = new saga_trials{
        saga::build_cm_trials(store->impl.metadata(), to_cpp(*quotas), seed)};
  });
}

saga_status saga_trials_build_asv(const saga_store* store,
                                  const saga_trial_quotas* quotas,
                                  uint64_t seed, saga_trials** out) {
  if (store == nullptr || quotas == nullptr || out == nullptr)
    return invalid("saga_trials_build_asv: null argument");
  return guarded([&] {
    *out = new saga_trials{
        saga::build_asv_trials(store->impl.metadata(), to_cpp(*quotas), seed)};
  });
}

saga_status saga_trials_concat(const saga_trials* a, const saga_trials* b,
                               saga_trials** out) {
  if (a == nullptr || b == nullptr || out == nullptr)
    return invalid("saga_trials_concat: null argument");
  return guarded([&] {
    auto merged = new saga_trials{a->impl};
    merged->impl.insert(merged->impl.end(), b->impl.begin(), b->impl.end());
    *out = merged;
  });
}

saga_status saga_trials_read(const char* path, saga_trials** out) {
  if (path == nullptr || out == nullptr)
    return invalid("saga_trials_read: null argument");
  return guarded([&] { *out = new saga_trials{saga::read_trials_tsv(path)}; });
}

saga_status saga_trials_write(const saga_trials* trials, const char* path) {
  if (trials == nullptr || path == nullptr)
    return invalid("saga_trials_write: null argument");
  return guarded([&] { saga::write_trials_tsv(trials->impl, path); });
}

void saga_trials_free(saga_trials* trials) { delete trials; }

uint64_t saga_trials_size(const saga_trials* trials) {
  return trials == nullptr ? 0 : trials->impl.size();
}

saga_status saga_trials_counts(const saga_trials* trials,
                               uint64_t counts[3]) {
  if (trials == nullptr || counts == nullptr)
    return invalid("saga_trials_counts: null argument");
  counts[0] = counts[1] = counts[2] = 0;
  for (const saga::Trial& t : trials->impl)
    ++counts[static_cast<int>(t.label)];
  return SAGA_OK;
}

/* -------------------------------------------------------------------- */
/* Model and training                                                    */
/* -------------------------------------------------------------------- */

saga_status saga_model_create(const saga_model_config* cfg, saga_model** out) {
  if (cfg == nullptr || out == nullptr)
    return invalid("saga_model_create: null argument");
  return guarded(
      [&] { *out = new saga_model{saga::build_model(to_cpp(*cfg))}; });
}

saga_status saga_model_read(const char* path, saga_model** out) {
  if (path == nullptr || out == nullptr)
    return invalid("saga_model_read: null argument");
  return guarded([&] { *out = new saga_model{saga::read_checkpoint(path)}; });
}

saga_status saga_model_write(const saga_model* model, const char* path) {
  if (model == nullptr || path == nullptr)
    return invalid("saga_model_write: null argument");
  return guarded([&] { saga::write_checkpoint(model->impl, path); });
}

void saga_model_free(saga_model* model) { delete model; }

saga_status saga_train_conventional(saga_model* model, const saga_store* store,
                                    const saga_trials* merged,
                                    const saga_train_options* options,
                                    const char* report_path) {
  if (model == nullptr || store == nullptr || merged == nullptr ||
      options == nullptr)
    return invalid("saga_train_conventional: null argument");
  return guarded([&] {
    saga::OptimizerState opt(to_cpp(options->optimizer), model->impl);
    const std::vector<saga::EpochReport> report = saga::train_conventional(
        model->impl, merged->impl, store->impl, options->epochs,
        options->batch_size, opt, saga::LossConfig{options->lambda_weight},
        options->seed);
    if (report_path != nullptr)
      saga::write_conventional_report_tsv(report, options->lambda_weight,
                                          report_path);
  });
}

saga_status saga_train_atmm(saga_model* model, const saga_store* store,
                            const saga_trials* cm_trials,
                            const saga_trials* asv_trials,
                            const saga_atmm_options* options,
                            const char* report_path) {
  if (model == nullptr || store == nullptr || cm_trials == nullptr ||
      asv_trials == nullptr || options == nullptr)
    return invalid("saga_train_atmm: null argument");
  return guarded([&] {
    saga::OptimizerState opt(to_cpp(options->optimizer), model->impl);
    const saga::AtmmDatasets datasets{cm_trials->impl, asv_trials->impl};
    const std::vector<saga::AtmmStep> steps = saga::train_atmm(
        model->impl, datasets, store->impl, to_cpp(*options), opt);
    if (report_path != nullptr)
      saga::write_atmm_report_tsv(steps, report_path);
  });
}

/* -------------------------------------------------------------------- */
/* Scores and metrics                                                    */
/* -------------------------------------------------------------------- */

saga_status saga_export_scores(const saga_model* model,
                               const saga_store* store,
                               const saga_trials* trials, saga_scores** out) {
  if (model == nullptr || store == nullptr || trials == nullptr ||
      out == nullptr)
    return invalid("saga_export_scores: null argument");
  return guarded([&] {
    *out = new saga_scores{
        saga::export_scores(model->impl, trials->impl, store->impl)};
  });
}

saga_status saga_scores_read(const char* path, saga_scores** out) {
  if (path == nullptr || out == nullptr)
    return invalid("saga_scores_read: null argument");
  return guarded([&] { *out = new saga_scores{saga::read_scores_tsv(path)}; });
}

saga_status saga_scores_write(const saga_scores* scores, const char* path) {
  if (scores == nullptr || path == nullptr)
    return invalid("saga_scores_write: null argument");
  return guarded([&] { saga::write_scores_tsv(scores->impl, path); });
}

void saga_scores_free(saga_scores* scores) { delete scores; }

uint64_t saga_scores_size(const saga_scores* scores) {
  return scores == nullptr ? 0 : scores->impl.entries.size();
}

saga_status saga_scores_eer(const saga_scores* scores, double* eer,
                            double* threshold) {
  if (scores == nullptr || eer == nullptr)
    return invalid("saga_scores_eer: null argument");
  return guarded([&] {
    const saga::EerResult r = saga::sasv_eer(scores->impl);
    *eer = r.eer;
    if (threshold != nullptr) *threshold = r.threshold;
  });
}

saga_status saga_scores_min_adcf(const saga_scores* scores,
                                 const saga_adcf_config* cfg, double* value,
                                 double* threshold) {
  if (scores == nullptr || cfg == nullptr || value == nullptr)
    return invalid("saga_scores_min_adcf: null argument");
  return guarded([&] {
    const saga::ADcfResult r = saga::min_adcf(scores->impl, to_cpp(*cfg));
    *value = r.value;
    if (threshold != nullptr) *threshold = r.threshold;
  });
}

saga_status saga_scores_bootstrap(const saga_scores* scores, int metric,
                                  const saga_adcf_config* cfg,
                                  uint32_t replicates, double level,
                                  uint64_t seed, saga_ci_result* out) {
  if (scores == nullptr || cfg == nullptr || out == nullptr)
    return invalid("saga_scores_bootstrap: null argument");
  if (metric < 0 || metric > 1)
    return invalid("saga_scores_bootstrap: metric must be 0 (eer) or 1 (adcf)");
  return guarded([&] {
    const saga::CiResult r = saga::bootstrap_ci(
        scores->impl, static_cast<saga::MetricKind>(metric), to_cpp(*cfg),
        replicates, level, seed);
    out->point = r.point;
    out->lower = r.lower;
    out->upper = r.upper;
    out->replicates = static_cast<uint32_t>(r.replicates);
    out->level = r.level;
  });
}

saga_status saga_scores_report(const saga_scores* scores,
                               const saga_adcf_config* cfg,
                               uint32_t replicates, double level,
                               uint64_t seed, const char* path) {
  if (scores == nullptr || cfg == nullptr || path == nullptr)
    return invalid("saga_scores_report: null argument");
  return guarded([&] {
    saga::write_metric_report_tsv(scores->impl, to_cpp(*cfg), replicates,
                                  level, seed, path);
  });
}

saga_status saga_scores_histogram_csv(const saga_scores* scores,
                                      uint32_t bins, const char* path) {
  if (scores == nullptr || path == nullptr)
    return invalid("saga_scores_histogram_csv: null argument");
  return guarded(
      [&] { saga::write_histogram_csv(scores->impl, bins, path); });
}

} /* extern "C" */
