#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "saga/metrics.hpp"
#include "saga/model.hpp"
#include "saga/store.hpp"
#include "saga/trials.hpp"

namespace saga {

struct LossConfig {
  double lambda = 0.5;  // weight on the SASV term; 1-lambda on the CM term

  void validate() const;
};

struct TotalLoss {
  double loss = 0.0;
  double d_sasv_logit = 0.0;  // lambda * (sigmoid(l) - y_sasv)
  double d_cm_logit = 0.0;    // (1-lambda) * (sigmoid(l) - y_cm)
};

// lambda * BCE(sasv_logit, y_sasv) + (1-lambda) * BCE(cm_logit, y_cm),
// evaluated from the logits for numerical stability.
TotalLoss total_loss(const ForwardTrace& trace, const TrialLabels& labels,
                     const LossConfig& cfg);

enum class OptimizerKind : std::uint8_t { Sgd = 0, Adam = 1 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Per-block first/second moment accumulators plus a per-block step counter so
// frozen blocks are bitwise no-ops (their moments and counters do not
// advance).
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(const OptimizerConfig& cfg, const FusionModel& model);

  const OptimizerConfig& config() const { return cfg_; }

  // Applies one update from `grads`, skipping every block whose group is in
  // `frozen`. Freezing the Joint group is a contract violation.
  void apply_update(FusionModel& model, Gradients& grads,
                    const std::set<ParamGroupTag>& frozen);

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<std::uint64_t> steps_;
};

// One audited ATMM iteration: which modality was drawn, the loss weight used,
// the frozen group, the sampled batch, and parameter digests proving the
// freeze held.
struct AtmmStep {
  int p = 0;                  // 0: CM focus, 1: ASV focus
  double lambda_used = 0.0;   // 0 -> lambda_cm_focus, 1 -> lambda_asv_focus
  ParamGroupTag frozen_group = ParamGroupTag::AsvPath;
  std::vector<Trial> batch;
  double mean_loss = 0.0;
  std::uint64_t digest_pre[3] = {0, 0, 0};   // indexed by ParamGroupTag
  std::uint64_t digest_post[3] = {0, 0, 0};
};

struct AtmmConfig {
  std::size_t rounds = 5;
  std::size_t iters_per_round = 100;
  double sample_fraction = 0.01;
  double lambda_cm_focus = 0.1;   // used when p = 0 (ASV weights frozen)
  double lambda_asv_focus = 0.9;  // used when p = 1 (CM weights frozen)
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;

  void validate() const;
};

// CM-training trials (all three classes) and ASV-training trials (no spoofs).
struct AtmmDatasets {
  std::vector<Trial> cm_dataset;
  std::vector<Trial> asv_dataset;

  void validate() const;
};

// Runs exactly cfg.iters_per_round alternating iterations starting at global
// iteration `first_step` (the offset keeps sampling streams distinct across
// rounds). Returns the audited step list.
std::vector<AtmmStep> atmm_round(FusionModel& model,
                                 const AtmmDatasets& datasets,
                                 const EmbeddingStore& store,
                                 const AtmmConfig& cfg, OptimizerState& opt,
                                 std::size_t first_step = 0);

// cfg.rounds rounds of atmm_round with a shared step counter.
std::vector<AtmmStep> train_atmm(FusionModel& model,
                                 const AtmmDatasets& datasets,
                                 const EmbeddingStore& store,
                                 const AtmmConfig& cfg, OptimizerState& opt);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

// Standard minibatch loop over the unified (CM + ASV) trial list with a fixed
// loss weight; no freezing.
std::vector<EpochReport> train_conventional(
    FusionModel& model, const std::vector<Trial>& trials,
    const EmbeddingStore& store, std::size_t epochs, std::size_t batch_size,
    OptimizerState& opt, const LossConfig& loss_cfg, std::uint64_t seed);

// Gathers and aggregates the embeddings a trial refers to. Missing
// utterances raise a contract violation naming the trial.
TrialInput make_trial_input(const EmbeddingStore& store, const Trial& trial);

// Inference-mode scores for every trial, in input order.
ScoreSet export_scores(const FusionModel& model,
                       const std::vector<Trial>& trials,
                       const EmbeddingStore& store);

// Training report rows: `step <TAB> p <TAB> lambda <TAB> mean_loss <TAB>
// frozen`. Conventional epochs use "-" for p and frozen.
void write_atmm_report_tsv(const std::vector<AtmmStep>& steps,
                           const std::string& path);
void write_conventional_report_tsv(const std::vector<EpochReport>& epochs,
                                   double lambda, const std::string& path);

}  // namespace saga
