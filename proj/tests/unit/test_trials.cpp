#include <algorithm>
#include <fstream>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "saga/errors.hpp"
#include "saga/store.hpp"
#include "saga/trials.hpp"

using namespace saga;
namespace fs = std::filesystem;

namespace {

UtteranceMeta bf(const std::string& utt, const std::string& spk) {
  return {utt, spk, Authenticity::BonaFide, ""};
}
UtteranceMeta sp(const std::string& utt, const std::string& spk) {
  return {utt, spk, Authenticity::Spoof, "A01"};
}

// Synthetic 10-speaker metadata with varying pool sizes.
std::vector<UtteranceMeta> ten_speakers() {
  std::vector<UtteranceMeta> utts;
  for (int s = 0; s < 10; ++s) {
    const std::string spk = "s" + std::to_string(s);
    const int n_bf = 1 + s % 4;     // 1..4 bona fide
    const int n_sp = s % 3;         // 0..2 spoofs
    for (int u = 0; u < n_bf; ++u)
      utts.push_back(bf(spk + "-b" + std::to_string(u), spk));
    for (int u = 0; u < n_sp; ++u)
      utts.push_back(sp(spk + "-x" + std::to_string(u), spk));
  }
  return utts;
}

std::size_t choose(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t c = 1;
  for (std::size_t i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
  return c;
}

}  // namespace

TEST_CASE("labels_of mapping") {
  CHECK(labels_of(TrialLabel::Target).y_sasv == 1);
  CHECK(labels_of(TrialLabel::Target).y_cm == 1);
  CHECK(labels_of(TrialLabel::NonTarget).y_sasv == 0);
  CHECK(labels_of(TrialLabel::NonTarget).y_cm == 1);
  CHECK(labels_of(TrialLabel::Spoof).y_sasv == 0);
  CHECK(labels_of(TrialLabel::Spoof).y_cm == 0);
}

TEST_CASE("two speakers, one bona fide each: only cross-speaker pairs exist") {
  const std::vector<UtteranceMeta> utts = {bf("a", "s1"), bf("b", "s2")};
  TrialQuotas q;
  q.per_utt_targets = 3;
  q.per_utt_nontargets = 1;
  q.per_utt_spoofs = 2;
  TrialBuildStats stats;
  const std::vector<Trial> trials = build_cm_trials(utts, q, 1, &stats);
  CHECK(stats.targets == 0);     // no same-speaker partner
  CHECK(stats.nontargets == 2);  // one per test utterance
  CHECK(stats.spoofs == 0);
  validate_trials(trials, utts);
}

TEST_CASE("class counts match combinatorial enumeration capped by quotas") {
  const std::vector<UtteranceMeta> utts = ten_speakers();
  TrialQuotas q;
  q.per_utt_targets = 2;
  q.per_utt_nontargets = 2;
  q.per_utt_spoofs = 2;
  q.enroll_size = 3;
  TrialBuildStats stats;
  const std::vector<Trial> trials = build_cm_trials(utts, q, 7, &stats);
  validate_trials(trials, utts);

  // Brute-force expectation: per test utterance, min(quota, admissible
  // distinct enrollment sets).
  std::size_t want_targets = 0, want_nontargets = 0, want_spoofs = 0;
  std::size_t bf_per_spk[10] = {};
  for (const UtteranceMeta& m : utts) {
    if (m.authenticity == Authenticity::BonaFide)
      ++bf_per_spk[m.speaker_id[1] - '0'];
  }
  for (const UtteranceMeta& m : utts) {
    const std::size_t own = bf_per_spk[m.speaker_id[1] - '0'];
    if (m.authenticity == Authenticity::BonaFide) {
      const std::size_t pool = own - 1;  // excludes the test utterance
      if (pool >= 1)
        want_targets += std::min<std::size_t>(
            q.per_utt_targets, choose(pool, std::min(q.enroll_size, pool)));
      std::size_t cross = 0;
      for (int s = 0; s < 10; ++s) {
        const std::string spk = "s" + std::to_string(s);
        if (spk == m.speaker_id || bf_per_spk[s] == 0) continue;
        cross += choose(bf_per_spk[s], std::min<std::size_t>(q.enroll_size,
                                                             bf_per_spk[s]));
      }
      want_nontargets += std::min<std::size_t>(q.per_utt_nontargets, cross);
    } else {
      if (own >= 1)
        want_spoofs += std::min<std::size_t>(
            q.per_utt_spoofs, choose(own, std::min(q.enroll_size, own)));
    }
  }
  CHECK(stats.targets == want_targets);
  CHECK(stats.nontargets == want_nontargets);
  CHECK(stats.spoofs == want_spoofs);
  CHECK(trials.size() == want_targets + want_nontargets + want_spoofs);
}

TEST_CASE("no duplicate (enrollment, test) pairs") {
  const std::vector<UtteranceMeta> utts = ten_speakers();
  TrialQuotas q;
  q.per_utt_targets = 5;
  q.per_utt_nontargets = 5;
  q.per_utt_spoofs = 5;
  const std::vector<Trial> trials = build_cm_trials(utts, q, 3);
  std::set<std::pair<std::vector<std::string>, std::string>> seen;
  for (const Trial& t : trials) {
    std::vector<std::string> ids = t.enroll_ids;
    std::sort(ids.begin(), ids.end());
    CHECK(seen.emplace(ids, t.test_id).second);
  }
}

TEST_CASE("builders are deterministic in the seed") {
  const std::vector<UtteranceMeta> utts = ten_speakers();
  TrialQuotas q;
  CHECK(build_cm_trials(utts, q, 5) == build_cm_trials(utts, q, 5));
  CHECK(build_asv_trials(utts, q, 5) == build_asv_trials(utts, q, 5));
  CHECK_FALSE(build_cm_trials(utts, q, 5) == build_cm_trials(utts, q, 6));
}

TEST_CASE("asv builder never emits spoof trials") {
  const std::vector<UtteranceMeta> utts = ten_speakers();
  TrialQuotas q;
  q.per_utt_spoofs = 50;
  TrialBuildStats stats;
  const std::vector<Trial> trials = build_asv_trials(utts, q, 9, &stats);
  CHECK(stats.spoofs == 0);
  for (const Trial& t : trials) CHECK(t.label != TrialLabel::Spoof);
  validate_trials(trials, utts);
}

TEST_CASE("single-speaker impostor pool yields zero nontargets") {
  // Two speakers but only one has bona fide material: for that speaker's
  // utterances there IS an impostor pool; for the other there is none.
  const std::vector<UtteranceMeta> utts = {bf("a0", "s1"), bf("a1", "s1"),
                                           sp("x0", "s2")};
  TrialQuotas q;
  TrialBuildStats stats;
  const std::vector<Trial> trials = build_cm_trials(utts, q, 1, &stats);
  CHECK(stats.nontargets == 0);  // s2 has no bona fide enrollment pool
  CHECK(stats.targets == 2);
  CHECK(stats.spoofs == 0);  // spoof of s2 has no same-speaker enrollment
  CHECK(stats.skipped_spoofs == 1);
  validate_trials(trials, utts);
}

TEST_CASE("sample_fraction") {
  std::vector<Trial> trials;
  for (int i = 0; i < 1000; ++i)
    trials.push_back({{"e"}, "t" + std::to_string(i), TrialLabel::Target});

  SUBCASE("fraction 1.0 is a permutation") {
    const std::vector<Trial> s = sample_fraction(trials, 1.0, 4, 0);
    CHECK(s.size() == trials.size());
    std::set<std::string> ids;
    for (const Trial& t : s) ids.insert(t.test_id);
    CHECK(ids.size() == trials.size());
  }
  SUBCASE("1% of 1000 is exactly 10") {
    CHECK(sample_fraction(trials, 0.01, 4, 0).size() == 10);
  }
  SUBCASE("deterministic in (seed, step)") {
    CHECK(sample_fraction(trials, 0.05, 4, 9) ==
          sample_fraction(trials, 0.05, 4, 9));
    CHECK_FALSE(sample_fraction(trials, 0.05, 4, 9) ==
                sample_fraction(trials, 0.05, 4, 10));
  }
  SUBCASE("tiny fraction still returns one trial") {
    CHECK(sample_fraction(trials, 1e-9, 4, 0).size() == 1);
  }
  SUBCASE("bad fraction throws") {
    CHECK_THROWS_AS(sample_fraction(trials, 0.0, 4, 0), ContractViolation);
    CHECK_THROWS_AS(sample_fraction(trials, 1.5, 4, 0), ContractViolation);
  }
}

TEST_CASE("trial protocol TSV round-trip") {
  const std::vector<UtteranceMeta> utts = ten_speakers();
  const std::vector<Trial> trials = build_cm_trials(utts, TrialQuotas{}, 2);
  const fs::path p = fs::temp_directory_path() / "saga_test_proto.tsv";
  write_trials_tsv(trials, p.string());
  const std::vector<Trial> loaded = read_trials_tsv(p.string());
  CHECK(loaded == trials);

  SUBCASE("malformed line reports its line number") {
    std::ofstream out(p);
    out << "e1,e2\tt1\ttarget\n";
    out << "no-tabs-here\n";
    out.close();
    try {
      read_trials_tsv(p.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.fault() == ParseFault::Malformed);
      CHECK(e.offset() == 2);
    }
  }
  SUBCASE("unknown label is rejected") {
    std::ofstream out(p);
    out << "e1\tt1\tbogus\n";
    out.close();
    CHECK_THROWS_AS(read_trials_tsv(p.string()), ParseError);
  }
}
