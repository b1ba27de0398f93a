#include "saga/trials.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "saga/errors.hpp"
#include "saga/rng.hpp"

namespace saga {

const char* to_string(TrialLabel label) {
  switch (label) {
    case TrialLabel::Target: return "target";
    case TrialLabel::NonTarget: return "nontarget";
    case TrialLabel::Spoof: return "spoof";
  }
  return "?";
}

TrialLabel trial_label_from_string(const std::string& s) {
  if (s == "target") return TrialLabel::Target;
  if (s == "nontarget") return TrialLabel::NonTarget;
  if (s == "spoof") return TrialLabel::Spoof;
  throw ContractViolation("unknown trial label: " + s);
}

TrialLabels labels_of(TrialLabel label) {
  switch (label) {
    case TrialLabel::Target: return {1, 1};
    case TrialLabel::NonTarget: return {0, 1};
    case TrialLabel::Spoof: return {0, 0};
  }
  throw ContractViolation("labels_of: invalid label");
}

namespace {

// Speaker pools in metadata order so trial construction is reproducible.
struct SpeakerPools {
  std::vector<std::string> speakers;                       // first appearance
  std::unordered_map<std::string, std::size_t> speaker_of;  // utt -> index
  std::vector<std::vector<std::string>> bonafide;           // per speaker
};

SpeakerPools collect_pools(const std::vector<UtteranceMeta>& utts) {
  SpeakerPools pools;
  std::unordered_map<std::string, std::size_t> index;
  for (const UtteranceMeta& m : utts) {
    m.validate();
    auto [it, fresh] = index.try_emplace(m.speaker_id, pools.speakers.size());
    if (fresh) {
      pools.speakers.push_back(m.speaker_id);
      pools.bonafide.emplace_back();
    }
    if (!pools.speaker_of.try_emplace(m.utt_id, it->second).second)
      throw ContractViolation("duplicate utterance id " + m.utt_id);
    if (m.authenticity == Authenticity::BonaFide)
      pools.bonafide[it->second].push_back(m.utt_id);
  }
  return pools;
}

// Number of k-subsets of an n-element pool, saturated at `cap`.
std::size_t choose_capped(std::size_t n, std::size_t k, std::size_t cap) {
  if (k > n) return 0;
  std::size_t c = 1;
  for (std::size_t i = 0; i < k; ++i) {
    c = c * (n - i) / (i + 1);
    if (c >= cap) return cap;
  }
  return c;
}

std::vector<std::string> pick_subset(const std::vector<std::string>& pool,
                                     std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[idx[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

std::string dedup_key(const std::vector<std::string>& enroll,
                      const std::string& test_id) {
  std::string key;
  for (const std::string& id : enroll) {
    key += id;
    key += ',';
  }
  key += '\x1f';
  key += test_id;
  return key;
}

class TrialSink {
 public:
  TrialSink(std::vector<Trial>& out, TrialBuildStats& stats)
      : out_(out), stats_(stats) {}

  bool emit(std::vector<std::string> enroll, const std::string& test_id,
            TrialLabel label) {
    std::string key = dedup_key(enroll, test_id);
    if (!seen_.insert(std::move(key)).second) return false;
    out_.push_back({std::move(enroll), test_id, label});
    switch (label) {
      case TrialLabel::Target: ++stats_.targets; break;
      case TrialLabel::NonTarget: ++stats_.nontargets; break;
      case TrialLabel::Spoof: ++stats_.spoofs; break;
    }
    return true;
  }

 private:
  std::vector<Trial>& out_;
  TrialBuildStats& stats_;
  std::unordered_set<std::string> seen_;
};

// Emits up to `want` distinct trials pairing `test_id` against enrollment
// subsets of `pool`. Small subset spaces are enumerated so the yield is
// exactly min(want, #subsets); large spaces are sampled with retries.
void emit_same_pool_trials(const std::vector<std::string>& pool,
                           std::size_t enroll_size, std::size_t want,
                           const std::string& test_id, TrialLabel label,
                           Rng& rng, TrialSink& sink) {
  if (pool.empty() || want == 0) return;
  const std::size_t k = std::min(enroll_size, pool.size());
  constexpr std::size_t kEnumerateLimit = 4096;
  const std::size_t space = choose_capped(pool.size(), k, kEnumerateLimit);

  if (space < kEnumerateLimit) {
    // Enumerate every k-subset, shuffle, take the first `want`.
    std::vector<std::vector<std::string>> subsets;
    std::vector<std::size_t> comb(k);
    for (std::size_t i = 0; i < k; ++i) comb[i] = i;
    while (true) {
      std::vector<std::string> ids;
      ids.reserve(k);
      for (std::size_t i : comb) ids.push_back(pool[i]);
      std::sort(ids.begin(), ids.end());
      subsets.push_back(std::move(ids));
      // next combination
      std::size_t i = k;
      while (i > 0 && comb[i - 1] == pool.size() - k + i - 1) --i;
      if (i == 0) break;
      ++comb[i - 1];
      for (std::size_t j = i; j < k; ++j) comb[j] = comb[j - 1] + 1;
    }
    for (std::size_t i = subsets.size(); i > 1; --i) {
      const std::size_t j = uniform_index(rng, i);
      std::swap(subsets[i - 1], subsets[j]);
    }
    std::size_t emitted = 0;
    for (auto& ids : subsets) {
      if (emitted >= want) break;
      if (sink.emit(std::move(ids), test_id, label)) ++emitted;
    }
    return;
  }

  std::size_t emitted = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 64 * want + 64;
  while (emitted < want && attempts < max_attempts) {
    ++attempts;
    if (sink.emit(pick_subset(pool, k, rng), test_id, label)) ++emitted;
  }
}

void emit_nontarget_trials(const SpeakerPools& pools, std::size_t own_speaker,
                           std::size_t enroll_size, std::size_t want,
                           const std::string& test_id, Rng& rng,
                           TrialSink& sink) {
  std::vector<std::size_t> impostors;
  for (std::size_t s = 0; s < pools.speakers.size(); ++s)
    if (s != own_speaker && !pools.bonafide[s].empty()) impostors.push_back(s);
  if (impostors.empty() || want == 0) return;

  std::size_t emitted = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 64 * want + 64;
  while (emitted < want && attempts < max_attempts) {
    ++attempts;
    const std::vector<std::string>& pool =
        pools.bonafide[impostors[uniform_index(rng, impostors.size())]];
    const std::size_t k = std::min(enroll_size, pool.size());
    if (sink.emit(pick_subset(pool, k, rng), test_id, TrialLabel::NonTarget))
      ++emitted;
  }
}

std::vector<Trial> build_trials_impl(const std::vector<UtteranceMeta>& utts,
                                     const TrialQuotas& quotas,
                                     std::uint64_t seed, bool include_spoofs,
                                     TrialBuildStats* stats_out) {
  if (quotas.enroll_size == 0)
    throw ContractViolation("trial builder: enroll_size must be positive");
  const SpeakerPools pools = collect_pools(utts);
  if (pools.speakers.size() < 2)
    throw ContractViolation("trial builder: need at least 2 speakers");

  std::vector<Trial> trials;
  TrialBuildStats stats;
  TrialSink sink(trials, stats);
  Rng rng = make_rng(seed, include_spoofs ? 0x7c1a : 0x7c1b);

  for (const UtteranceMeta& m : utts) {
    const std::size_t speaker = pools.speaker_of.at(m.utt_id);
    const std::vector<std::string>& own = pools.bonafide[speaker];

    if (m.authenticity == Authenticity::BonaFide) {
      // Target: enrollment drawn from the same speaker's other bona fide
      // utterances.
      std::vector<std::string> others;
      others.reserve(own.size());
      for (const std::string& id : own)
        if (id != m.utt_id) others.push_back(id);
      emit_same_pool_trials(others, quotas.enroll_size, quotas.per_utt_targets,
                            m.utt_id, TrialLabel::Target, rng, sink);
      emit_nontarget_trials(pools, speaker, quotas.enroll_size,
                            quotas.per_utt_nontargets, m.utt_id, rng, sink);
    } else if (include_spoofs) {
      if (own.empty()) {
        ++stats.skipped_spoofs;
        continue;
      }
      emit_same_pool_trials(own, quotas.enroll_size, quotas.per_utt_spoofs,
                            m.utt_id, TrialLabel::Spoof, rng, sink);
    }
  }

  if (stats_out != nullptr) *stats_out = stats;
  return trials;
}

}  // namespace

std::vector<Trial> build_cm_trials(const std::vector<UtteranceMeta>& utts,
                                   const TrialQuotas& quotas,
                                   std::uint64_t seed,
                                   TrialBuildStats* stats) {
  return build_trials_impl(utts, quotas, seed, /*include_spoofs=*/true, stats);
}

std::vector<Trial> build_asv_trials(const std::vector<UtteranceMeta>& utts,
                                    const TrialQuotas& quotas,
                                    std::uint64_t seed,
                                    TrialBuildStats* stats) {
  return build_trials_impl(utts, quotas, seed, /*include_spoofs=*/false,
                           stats);
}

std::vector<Trial> sample_fraction(const std::vector<Trial>& trials,
                                   double fraction, std::uint64_t seed,
                                   std::uint64_t step) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ContractViolation("sample_fraction: fraction must be in (0, 1]");
  const std::size_t n = trials.size();
  if (n == 0) return {};
  // Nudge below the product before taking the ceiling so representation
  // error in fraction*n cannot inflate the count (0.01 * 1000 must give 10).
  std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::max<std::size_t>(1, std::min(k, n));

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = make_rng(seed, 0x5a3c, step);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<Trial> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(trials[idx[i]]);
  return out;
}

void write_trials_tsv(const std::vector<Trial>& trials,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Trial& t : trials) {
    if (t.enroll_ids.empty())
      throw ContractViolation("trial with empty enrollment for test " +
                              t.test_id);
    for (std::size_t i = 0; i < t.enroll_ids.size(); ++i) {
      if (i > 0) out << ',';
      out << t.enroll_ids[i];
    }
    out << '\t' << t.test_id << '\t' << to_string(t.label) << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<Trial> read_trials_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<Trial> trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string enroll_field, test_id, label;
    if (!std::getline(ss, enroll_field, '\t') ||
        !std::getline(ss, test_id, '\t') || !std::getline(ss, label))
      throw ParseError(ParseFault::Malformed, lineno,
                       "trial line needs 3 tab-separated fields");
    Trial t;
    std::istringstream es(enroll_field);
    std::string id;
    while (std::getline(es, id, ','))
      if (!id.empty()) t.enroll_ids.push_back(id);
    if (t.enroll_ids.empty())
      throw ParseError(ParseFault::Malformed, lineno,
                       "trial line has no enrollment utterances");
    t.test_id = std::move(test_id);
    try {
      t.label = trial_label_from_string(label);
    } catch (const ContractViolation& e) {
      throw ParseError(ParseFault::Malformed, lineno, e.what());
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

void validate_trials(const std::vector<Trial>& trials,
                     const std::vector<UtteranceMeta>& utts) {
  std::unordered_map<std::string, const UtteranceMeta*> by_id;
  for (const UtteranceMeta& m : utts) by_id[m.utt_id] = &m;

  for (const Trial& t : trials) {
    if (t.enroll_ids.empty())
      throw ContractViolation("trial with empty enrollment for test " +
                              t.test_id);
    auto test_it = by_id.find(t.test_id);
    if (test_it == by_id.end())
      throw ContractViolation("trial references unknown test " + t.test_id);
    const UtteranceMeta& test = *test_it->second;

    std::string claimed;
    for (const std::string& id : t.enroll_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw ContractViolation("trial references unknown enrollment " + id);
      if (it->second->authenticity != Authenticity::BonaFide)
        throw ContractViolation("spoofed utterance " + id +
                                " used for enrollment");
      if (claimed.empty()) {
        claimed = it->second->speaker_id;
      } else if (claimed != it->second->speaker_id) {
        throw ContractViolation("enrollment mixes speakers in trial for " +
                                t.test_id);
      }
    }

    const bool same_speaker = test.speaker_id == claimed;
    const bool spoofed = test.authenticity == Authenticity::Spoof;
    switch (t.label) {
      case TrialLabel::Target:
        if (!same_speaker || spoofed)
          throw ContractViolation("mislabeled target trial for " + t.test_id);
        break;
      case TrialLabel::NonTarget:
        if (same_speaker || spoofed)
          throw ContractViolation("mislabeled nontarget trial for " +
                                  t.test_id);
        break;
      case TrialLabel::Spoof:
        if (!spoofed)
          throw ContractViolation("mislabeled spoof trial for " + t.test_id);
        break;
    }
  }
}

}  // namespace saga
