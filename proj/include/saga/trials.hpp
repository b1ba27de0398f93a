#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saga/store.hpp"

namespace saga {

enum class TrialLabel : std::uint8_t { Target = 0, NonTarget = 1, Spoof = 2 };

const char* to_string(TrialLabel label);
TrialLabel trial_label_from_string(const std::string& s);

// One enrollment-set / test-utterance pair. Enrollment utterances are always
// bona fide and always belong to a single claimed speaker.
struct Trial {
  std::vector<std::string> enroll_ids;
  std::string test_id;
  TrialLabel label = TrialLabel::Target;

  friend bool operator==(const Trial&, const Trial&) = default;
};

// Per-task binary labels: Target -> (1,1), NonTarget -> (0,1), Spoof -> (0,0).
struct TrialLabels {
  int y_sasv = 0;
  int y_cm = 0;
};

TrialLabels labels_of(TrialLabel label);
inline TrialLabels labels_of(const Trial& trial) { return labels_of(trial.label); }

// Pairing quotas. The builders cap each test utterance at the given number of
// trials per class; enrollment sets hold min(enroll_size, available) bona fide
// utterances of the claimed speaker. The defaults size the training datasets
// so one alternating-training round updates on a useful number of batches.
struct TrialQuotas {
  std::size_t per_utt_targets = 24;
  std::size_t per_utt_nontargets = 24;
  std::size_t per_utt_spoofs = 24;
  std::size_t enroll_size = 3;
};

struct TrialBuildStats {
  std::size_t targets = 0;
  std::size_t nontargets = 0;
  std::size_t spoofs = 0;
  // Spoofed utterances skipped because their speaker has no bona fide
  // enrollment material.
  std::size_t skipped_spoofs = 0;
};

// All three trial classes; used to train (and evaluate) the countermeasure
// side. Deterministic in (metadata order, quotas, seed); never emits the same
// (enrollment set, test) pair twice.
std::vector<Trial> build_cm_trials(const std::vector<UtteranceMeta>& utts,
                                   const TrialQuotas& quotas,
                                   std::uint64_t seed,
                                   TrialBuildStats* stats = nullptr);

// Target and zero-effort non-target trials only; spoofed utterances are never
// used, so the result contains no Spoof entry.
std::vector<Trial> build_asv_trials(const std::vector<UtteranceMeta>& utts,
                                    const TrialQuotas& quotas,
                                    std::uint64_t seed,
                                    TrialBuildStats* stats = nullptr);

// Uniform sample without replacement of ceil(fraction * N) trials, drawn from
// a stream fully determined by (seed, step).
std::vector<Trial> sample_fraction(const std::vector<Trial>& trials,
                                   double fraction, std::uint64_t seed,
                                   std::uint64_t step);

// Trial protocol file: `id1,id2,... <TAB> test_id <TAB> label` per line with
// label in {target, nontarget, spoof}.
void write_trials_tsv(const std::vector<Trial>& trials,
                      const std::string& path);
std::vector<Trial> read_trials_tsv(const std::string& path);

// Cross-checks every trial against utterance metadata (enrollment bona fide
// and single-speaker, label consistent with speakers/authenticity).
void validate_trials(const std::vector<Trial>& trials,
                     const std::vector<UtteranceMeta>& utts);

}  // namespace saga
