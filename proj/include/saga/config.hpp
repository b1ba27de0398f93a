#pragma once

#include <cstdint>
#include <string>

#include "saga/metrics.hpp"
#include "saga/model.hpp"
#include "saga/store.hpp"
#include "saga/training.hpp"
#include "saga/trials.hpp"

namespace saga {

// Everything the CLI can configure, with desk-scale defaults. Loaded from a
// `key = value` text file; unknown keys are rejected.
struct RunConfig {
  SynthConfig gen;

  // model.asv_dim / model.cm_dim stay 0 in configs; they are taken from the
  // store at model-build time.
  ModelConfig model{Strategy::EarlyGate, 0, 0, 0, 0, 0, false, 0.0, 1};

  TrialQuotas quotas;
  // Evaluation protocols are lighter than training pairings.
  std::size_t eval_quota = 4;
  std::uint64_t trials_seed = 1;

  bool use_atmm = true;
  std::size_t epochs = 4;
  std::size_t batch_size = 128;
  double lambda = 0.5;
  std::uint64_t train_seed = 1;

  AtmmConfig atmm;
  OptimizerConfig optimizer;

  std::size_t eval_replicates = 1000;
  double eval_level = 0.95;
  std::uint64_t eval_seed = 1;
  std::size_t hist_bins = 20;

  ADcfConfig adcf;
};

// Parses `key = value` lines ('#' starts a comment). Unknown keys and
// unparsable values raise ParseError with the line number.
RunConfig load_run_config(const std::string& path);

// Applies one key/value pair; exposed so CLI flags can reuse the dispatch.
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value, std::size_t lineno = 0);

}  // namespace saga
