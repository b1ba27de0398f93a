// Command-line front end for the fusion library. Talks to the shared library
// exclusively through the C API in saga/saga.h.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "saga/saga.h"

namespace {

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error(message);
}

void check(saga_status status) {
  if (status != SAGA_OK) fail(saga_last_error());
}

struct StoreDeleter {
  void operator()(saga_store* p) const { saga_store_free(p); }
};
struct TrialsDeleter {
  void operator()(saga_trials* p) const { saga_trials_free(p); }
};
struct ModelDeleter {
  void operator()(saga_model* p) const { saga_model_free(p); }
};
struct ScoresDeleter {
  void operator()(saga_scores* p) const { saga_scores_free(p); }
};

using StorePtr = std::unique_ptr<saga_store, StoreDeleter>;
using TrialsPtr = std::unique_ptr<saga_trials, TrialsDeleter>;
using ModelPtr = std::unique_ptr<saga_model, ModelDeleter>;
using ScoresPtr = std::unique_ptr<saga_scores, ScoresDeleter>;

StorePtr read_store(const std::string& path) {
  saga_store* raw = nullptr;
  check(saga_store_read(path.c_str(), &raw));
  return StorePtr(raw);
}

TrialsPtr read_trials(const std::string& path) {
  saga_trials* raw = nullptr;
  check(saga_trials_read(path.c_str(), &raw));
  return TrialsPtr(raw);
}

// Shared CLI state: config file, flag overrides, master seed.
struct CommonOpts {
  std::string config_path;
  std::string strategy;
  std::string atmm;
  std::string bn;
  double dropout = -1.0;  // <0: not set
  std::uint64_t seed = 0;
  bool seed_set = false;
};

saga_run_config load_config(const CommonOpts& opts) {
  saga_run_config cfg;
  saga_run_config_default(&cfg);
  if (!opts.config_path.empty())
    check(saga_run_config_load(opts.config_path.c_str(), &cfg));
  if (!opts.strategy.empty())
    check(saga_run_config_set(&cfg, "model.strategy", opts.strategy.c_str()));
  if (!opts.atmm.empty())
    check(saga_run_config_set(&cfg, "train.use_atmm", opts.atmm.c_str()));
  if (!opts.bn.empty())
    check(saga_run_config_set(&cfg, "model.use_batchnorm", opts.bn.c_str()));
  if (opts.dropout >= 0.0) cfg.model.dropout_rate = opts.dropout;
  if (opts.seed_set) {
    cfg.gen.seed = opts.seed;
    cfg.model.seed = opts.seed;
    cfg.trials_seed = opts.seed;
    cfg.train.seed = opts.seed;
    cfg.atmm.seed = opts.seed;
    cfg.eval_seed = opts.seed;
  }
  return cfg;
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool with_model_flags) {
  cmd->add_option("--config", opts.config_path,
                  "key = value configuration file");
  cmd->add_option("--seed", opts.seed, "master seed override")
      ->each([&](const std::string&) { opts.seed_set = true; });
  if (with_model_flags) {
    cmd->add_option("--strategy", opts.strategy, "integration strategy")
        ->check(CLI::IsMember({"s1", "s2", "s3"}));
    cmd->add_option("--atmm", opts.atmm, "alternating training on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--bn", opts.bn, "batch normalization on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--dropout", opts.dropout, "dropout rate (0 disables)")
        ->check(CLI::Range(0.0, 0.999));
  }
}

// Evaluation protocols are built with the lighter per-utterance quota.
saga_trial_quotas eval_quotas(const saga_run_config& cfg) {
  saga_trial_quotas q = cfg.quotas;
  q.per_utt_targets = cfg.eval_quota;
  q.per_utt_nontargets = cfg.eval_quota;
  q.per_utt_spoofs = cfg.eval_quota;
  return q;
}

// Builds the model sized from the store and trains it per the config.
ModelPtr train_model(const saga_run_config& cfg, const saga_store* store,
                     const std::string& report_path) {
  saga_model_config mc = cfg.model;
  mc.asv_dim = saga_store_asv_dim(store);
  mc.cm_dim = saga_store_cm_dim(store);
  saga_model* raw = nullptr;
  check(saga_model_create(&mc, &raw));
  ModelPtr model(raw);

  TrialsPtr cm, asv;
  {
    saga_trials* t = nullptr;
    check(saga_trials_build_cm(store, &cfg.quotas, cfg.trials_seed, &t));
    cm.reset(t);
    t = nullptr;
    check(saga_trials_build_asv(store, &cfg.quotas, cfg.trials_seed, &t));
    asv.reset(t);
  }

  const char* report = report_path.empty() ? nullptr : report_path.c_str();
  if (cfg.use_atmm != 0) {
    check(saga_train_atmm(model.get(), store, cm.get(), asv.get(), &cfg.atmm,
                          report));
  } else {
    saga_trials* merged_raw = nullptr;
    check(saga_trials_concat(cm.get(), asv.get(), &merged_raw));
    TrialsPtr merged(merged_raw);
    check(saga_train_conventional(model.get(), store, merged.get(),
                                  &cfg.train, report));
  }
  return model;
}

int cmd_gen(const CommonOpts& opts, const std::string& out,
            std::string meta_path, const std::string& protocol_out,
            std::uint32_t speakers) {
  saga_run_config cfg = load_config(opts);
  if (speakers > 0) cfg.gen.n_speakers = speakers;

  saga_store* raw = nullptr;
  check(saga_store_generate(&cfg.gen, &raw));
  StorePtr store(raw);
  check(saga_store_write(store.get(), out.c_str()));
  if (meta_path.empty()) meta_path = out + ".meta.tsv";
  check(saga_store_write_metadata(store.get(), meta_path.c_str()));
  std::printf("wrote store %s (%llu utterances, asv_dim=%u, cm_dim=%u)\n",
              out.c_str(),
              static_cast<unsigned long long>(saga_store_size(store.get())),
              saga_store_asv_dim(store.get()), saga_store_cm_dim(store.get()));
  std::printf("wrote metadata %s\n", meta_path.c_str());

  if (!protocol_out.empty()) {
    saga_trials* t = nullptr;
    check(saga_trials_build_cm(store.get(), &cfg.quotas, cfg.trials_seed, &t));
    TrialsPtr trials(t);
    check(saga_trials_write(trials.get(), protocol_out.c_str()));
    uint64_t counts[3];
    check(saga_trials_counts(trials.get(), counts));
    std::printf(
        "wrote protocol %s (%llu target / %llu nontarget / %llu spoof)\n",
        protocol_out.c_str(), static_cast<unsigned long long>(counts[0]),
        static_cast<unsigned long long>(counts[1]),
        static_cast<unsigned long long>(counts[2]));
  }
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& store_path,
              const std::string& out, std::string report_path) {
  const saga_run_config cfg = load_config(opts);
  StorePtr store = read_store(store_path);
  if (report_path.empty()) report_path = out + ".report.tsv";
  ModelPtr model = train_model(cfg, store.get(), report_path);
  check(saga_model_write(model.get(), out.c_str()));
  std::printf("wrote checkpoint %s\n", out.c_str());
  std::printf("wrote training report %s\n", report_path.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint,
             const std::string& store_path, const std::string& protocol,
             const std::string& out, std::string report_path) {
  const saga_run_config cfg = load_config(opts);
  saga_model* raw_model = nullptr;
  check(saga_model_read(checkpoint.c_str(), &raw_model));
  ModelPtr model(raw_model);
  StorePtr store = read_store(store_path);
  TrialsPtr trials = read_trials(protocol);

  saga_scores* raw_scores = nullptr;
  check(saga_export_scores(model.get(), store.get(), trials.get(),
                           &raw_scores));
  ScoresPtr scores(raw_scores);
  check(saga_scores_write(scores.get(), out.c_str()));
  std::printf("wrote scores %s (%llu trials)\n", out.c_str(),
              static_cast<unsigned long long>(saga_scores_size(scores.get())));

  if (report_path.empty()) report_path = out + ".metrics.tsv";
  check(saga_scores_report(scores.get(), &cfg.adcf, cfg.eval_replicates,
                           cfg.eval_level, cfg.eval_seed,
                           report_path.c_str()));

  double eer = 0, eer_t = 0, adcf = 0, adcf_t = 0;
  check(saga_scores_eer(scores.get(), &eer, &eer_t));
  check(saga_scores_min_adcf(scores.get(), &cfg.adcf, &adcf, &adcf_t));
  std::printf("SASV-EER %.4f%%  min a-DCF %.4f\n", 100.0 * eer, adcf);
  std::printf("wrote metric report %s\n", report_path.c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& store_path,
               const std::string& eval_store_path, const std::string& protocol,
               const std::string& out) {
  const saga_run_config base = load_config(opts);
  StorePtr train_store = read_store(store_path);
  StorePtr eval_store =
      eval_store_path.empty() ? nullptr : read_store(eval_store_path);
  const saga_store* eval_ptr =
      eval_store ? eval_store.get() : train_store.get();
  TrialsPtr eval_trials = read_trials(protocol);

  // Dev protocol: held-out pairings over the training store.
  TrialsPtr dev_trials;
  {
    saga_trials* t = nullptr;
    check(saga_trials_build_cm(train_store.get(), &base.quotas,
                               base.trials_seed + 1, &t));
    dev_trials.reset(t);
  }

  std::FILE* f = std::fopen(out.c_str(), "w");
  if (f == nullptr) fail("cannot open " + out + " for writing");
  std::fprintf(f, "bn\tdropout\tatmm\tdev_min_adcf\teval_min_adcf\tdev_eer\teval_eer\n");
  std::printf("bn   drop atmm | dev a-DCF  eval a-DCF |  dev EER   eval EER\n");

  const double drop_rate =
      base.model.dropout_rate > 0.0 ? base.model.dropout_rate : 0.2;
  for (int atmm = 0; atmm <= 1; ++atmm) {
    for (int drop = 0; drop <= 1; ++drop) {
      for (int bn = 0; bn <= 1; ++bn) {
        saga_run_config cfg = base;
        cfg.use_atmm = atmm;
        cfg.model.use_batchnorm = bn;
        cfg.model.dropout_rate = drop ? drop_rate : 0.0;

        ModelPtr model = train_model(cfg, train_store.get(), "");

        auto metrics = [&](const saga_store* st, const saga_trials* trials,
                           double* adcf_out, double* eer_out) {
          saga_scores* raw = nullptr;
          check(saga_export_scores(model.get(), st, trials, &raw));
          ScoresPtr scores(raw);
          check(saga_scores_min_adcf(scores.get(), &cfg.adcf, adcf_out,
                                     nullptr));
          check(saga_scores_eer(scores.get(), eer_out, nullptr));
        };
        double dev_adcf = 0, dev_eer = 0, eval_adcf = 0, eval_eer = 0;
        metrics(train_store.get(), dev_trials.get(), &dev_adcf, &dev_eer);
        metrics(eval_ptr, eval_trials.get(), &eval_adcf, &eval_eer);

        std::fprintf(f, "%s\t%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\n",
                     bn ? "on" : "off", drop ? "on" : "off",
                     atmm ? "on" : "off", dev_adcf, eval_adcf, dev_eer,
                     eval_eer);
        std::printf("%-4s %-4s %-4s | %9.4f  %10.4f | %7.2f%%  %7.2f%%\n",
                    bn ? "on" : "off", drop ? "on" : "off",
                    atmm ? "on" : "off", dev_adcf, eval_adcf, 100 * dev_eer,
                    100 * eval_eer);
      }
    }
  }
  std::fclose(f);
  std::printf("wrote ablation table %s\n", out.c_str());
  return 0;
}

int cmd_hist(const CommonOpts& opts, const std::string& scores_path,
             const std::string& out, std::uint32_t bins) {
  const saga_run_config cfg = load_config(opts);
  saga_scores* raw = nullptr;
  check(saga_scores_read(scores_path.c_str(), &raw));
  ScoresPtr scores(raw);
  check(saga_scores_histogram_csv(scores.get(),
                                  bins > 0 ? bins : cfg.hist_bins,
                                  out.c_str()));
  std::printf("wrote histogram %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spoofing-robust speaker verification fusion toolkit"};
  app.require_subcommand(1);

  // gen
  CommonOpts gen_opts;
  std::string gen_out, gen_meta, gen_protocol;
  std::uint32_t gen_speakers = 0;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic store");
  gen->add_option("--out", gen_out, "store output path")->required();
  gen->add_option("--meta", gen_meta, "metadata TSV path");
  gen->add_option("--protocol-out", gen_protocol,
                  "also write an evaluation protocol TSV");
  gen->add_option("--speakers", gen_speakers, "number of speakers");
  add_common_flags(gen, gen_opts, false);

  // train
  CommonOpts train_opts;
  std::string train_store_path, train_out, train_report;
  CLI::App* train = app.add_subcommand("train", "train a fusion model");
  train->add_option("--store", train_store_path, "embedding store")
      ->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--report", train_report, "training report TSV path");
  add_common_flags(train, train_opts, true);

  // eval
  CommonOpts eval_opts;
  std::string eval_ckpt, eval_store_path, eval_protocol, eval_out, eval_report;
  CLI::App* eval = app.add_subcommand("eval", "score a protocol and report");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--store", eval_store_path, "embedding store")->required();
  eval->add_option("--protocol", eval_protocol, "trial protocol TSV")
      ->required();
  eval->add_option("--out", eval_out, "score file output path")->required();
  eval->add_option("--report", eval_report, "metric report TSV path");
  add_common_flags(eval, eval_opts, false);

  // ablate
  CommonOpts ablate_opts;
  std::string ab_store, ab_eval_store, ab_protocol, ab_out;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "train the 2x2x2 bn/dropout/atmm grid and tabulate metrics");
  ablate->add_option("--store", ab_store, "training store")->required();
  ablate->add_option("--eval-store", ab_eval_store,
                     "held-out store (defaults to the training store)");
  ablate->add_option("--protocol", ab_protocol, "evaluation protocol TSV")
      ->required();
  ablate->add_option("--out", ab_out, "summary table output path")->required();
  add_common_flags(ablate, ablate_opts, true);

  // hist
  CommonOpts hist_opts;
  std::string hist_scores, hist_out;
  std::uint32_t hist_bins = 0;
  CLI::App* hist = app.add_subcommand("hist", "per-class score histograms");
  hist->add_option("--scores", hist_scores, "score file TSV")->required();
  hist->add_option("--out", hist_out, "histogram CSV output path")->required();
  hist->add_option("--bins", hist_bins, "number of bins");
  add_common_flags(hist, hist_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(gen_opts, gen_out, gen_meta, gen_protocol, gen_speakers);
    if (train->parsed())
      return cmd_train(train_opts, train_store_path, train_out, train_report);
    if (eval->parsed())
      return cmd_eval(eval_opts, eval_ckpt, eval_store_path, eval_protocol,
                      eval_out, eval_report);
    if (ablate->parsed())
      return cmd_ablate(ablate_opts, ab_store, ab_eval_store, ab_protocol,
                        ab_out);
    if (hist->parsed())
      return cmd_hist(hist_opts, hist_scores, hist_out, hist_bins);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
