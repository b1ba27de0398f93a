#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saga/numerics.hpp"

namespace saga {

enum class Authenticity : std::uint8_t { BonaFide = 0, Spoof = 1 };

struct UtteranceMeta {
  std::string utt_id;
  std::string speaker_id;
  Authenticity authenticity = Authenticity::BonaFide;
  std::string attack_id;  // non-empty iff spoofed

  void validate() const;
};

struct StoreRecord {
  UtteranceMeta meta;
  Vector asv_embedding;
  Vector cm_embedding;

  friend bool operator==(const StoreRecord&, const StoreRecord&);
};

// In-memory embedding table keyed by utterance id. Insertion order is
// preserved so serialization is reproducible.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t asv_dim, std::size_t cm_dim)
      : asv_dim_(asv_dim), cm_dim_(cm_dim) {}

  std::size_t asv_dim() const noexcept { return asv_dim_; }
  std::size_t cm_dim() const noexcept { return cm_dim_; }
  std::size_t size() const noexcept { return records_.size(); }

  void add(StoreRecord record);
  const StoreRecord* find(const std::string& utt_id) const;
  const StoreRecord& require(const std::string& utt_id) const;
  const std::vector<StoreRecord>& records() const noexcept { return records_; }

  std::vector<UtteranceMeta> metadata() const;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&);

 private:
  std::size_t asv_dim_ = 0;
  std::size_t cm_dim_ = 0;
  std::vector<StoreRecord> records_;
  std::map<std::string, std::size_t> index_;
};

// Synthetic corpus parameters. Spoofed utterances mimic the target speaker
// in ASV space (mimicry 1 = indistinguishable) while their countermeasure
// embeddings sit on the far side of a fixed artifact axis.
struct SynthConfig {
  std::size_t n_speakers = 50;
  std::size_t utts_per_speaker = 20;
  std::size_t spoofs_per_speaker = 20;
  std::size_t asv_dim = 32;
  std::size_t cm_dim = 16;
  double speaker_noise = 0.3;   // expected norm of the per-utterance drift
  double spoof_mimicry = 0.95;  // in [0, 1]
  double cm_separation = 4.0;   // distance between bona fide / spoof clusters
  std::uint64_t seed = 1;

  void validate() const;
};

EmbeddingStore generate(const SynthConfig& cfg);

// Binary store format (little-endian): magic "SGEM", u32 version, u32
// asv_dim, u32 cm_dim, u64 record count; per record: u16-length-prefixed
// utterance id, speaker id, u8 authenticity, u16-length-prefixed attack tag
// (length 0 when absent), then asv_dim + cm_dim f64 values.
void write_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore read_store(const std::string& path);

// Metadata sidecar: `utt_id <TAB> speaker_id <TAB> bonafide|spoof <TAB>
// attack_id|-` per line.
void write_metadata_tsv(const std::vector<UtteranceMeta>& metas,
                        const std::string& path);
std::vector<UtteranceMeta> read_metadata_tsv(const std::string& path);

}  // namespace saga
