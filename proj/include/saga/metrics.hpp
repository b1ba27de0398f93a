#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saga/trials.hpp"

namespace saga {

struct ScoreEntry {
  std::string test_id;
  TrialLabel label = TrialLabel::Target;
  double sasv_score = 0.0;
  double cm_score = 0.0;
};

struct ScoreSet {
  std::vector<ScoreEntry> entries;

  std::size_t count(TrialLabel label) const;
};

// Error rates at one threshold with strict acceptance (score > t).
struct ErrorRates {
  double threshold = 0.0;
  double p_miss = 0.0;    // targets with score <= t
  double p_fa_non = 0.0;  // non-targets with score > t
  double p_fa_spf = 0.0;  // spoofs with score > t
};

ErrorRates error_rates_at(const ScoreSet& scores, double threshold);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate with NonTarget and Spoof pooled into one impostor class.
// Sweeps midpoint thresholds between distinct scores (plus sentinels) and
// linearly interpolates between the bracketing ROC points when the miss and
// false-acceptance curves do not cross exactly.
EerResult sasv_eer(const ScoreSet& scores);

struct ADcfConfig {
  double pi_tar = 0.9405;
  double pi_non = 0.0095;
  double pi_spf = 0.05;
  double c_miss = 1.0;
  double c_fa_non = 10.0;
  double c_fa_spf = 10.0;

  void validate() const;
};

struct ADcfResult {
  double value = 0.0;
  double threshold = 0.0;
};

// Minimum over thresholds of the prior- and cost-weighted detection cost,
// normalized so the best trivial system scores 1. Ties break toward the
// smallest threshold.
ADcfResult min_adcf(const ScoreSet& scores, const ADcfConfig& cfg);

enum class MetricKind : std::uint8_t { SasvEer = 0, MinADcf = 1 };

struct CiResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t replicates = 0;
  double level = 0.0;
};

// Percentile bootstrap, stratified per class so every replicate preserves the
// original class counts. Deterministic in the seed.
CiResult bootstrap_ci(const ScoreSet& scores, MetricKind metric,
                      const ADcfConfig& adcf_cfg, std::size_t replicates,
                      double level, std::uint64_t seed);

struct Histogram {
  std::vector<double> density;  // sums to 1 when multiplied by bin width
  bool empty_class = false;
};

// Equal-width bins over [0, 1] of the SASV scores of one class.
Histogram histogram(const ScoreSet& scores, TrialLabel label,
                    std::size_t bins);

// Score file: `test_id <TAB> label <TAB> sasv_score <TAB> cm_score`.
// Doubles are printed round-trip exactly so identical runs yield identical
// bytes.
void write_scores_tsv(const ScoreSet& scores, const std::string& path);
ScoreSet read_scores_tsv(const std::string& path);

// Metric report rows: `metric <TAB> point <TAB> ci_lower <TAB> ci_upper
// <TAB> threshold`.
void write_metric_report_tsv(const ScoreSet& scores, const ADcfConfig& cfg,
                             std::size_t replicates, double level,
                             std::uint64_t seed, const std::string& path);

// Histogram CSV: `bin_left,bin_right,target,nontarget,spoof` per bin row.
void write_histogram_csv(const ScoreSet& scores, std::size_t bins,
                         const std::string& path);

}  // namespace saga
