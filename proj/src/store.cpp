#include "saga/store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "saga/errors.hpp"
#include "saga/rng.hpp"

namespace saga {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'E', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "store serialization assumes a little-endian host");

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void raw(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(size));
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str16(const std::string& s) {
    if (s.size() > 0xffff)
      throw ContractViolation("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::size_t offset() const noexcept { return offset_; }

  void raw(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size)
      throw ParseError(ParseFault::Truncated, offset_,
                       "unexpected end of file");
    offset_ += size;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str16() {
    const std::uint16_t n = u16();
    std::string s(n, '\0');
    if (n > 0) raw(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void UtteranceMeta::validate() const {
  if (utt_id.empty() || speaker_id.empty())
    throw ContractViolation("utterance metadata: empty identifier");
  const bool spoofed = authenticity == Authenticity::Spoof;
  if (spoofed != !attack_id.empty())
    throw ContractViolation("utterance " + utt_id +
                            ": attack tag must be present iff spoofed");
}

bool operator==(const StoreRecord& a, const StoreRecord& b) {
  return a.meta.utt_id == b.meta.utt_id &&
         a.meta.speaker_id == b.meta.speaker_id &&
         a.meta.authenticity == b.meta.authenticity &&
         a.meta.attack_id == b.meta.attack_id &&
         a.asv_embedding == b.asv_embedding && a.cm_embedding == b.cm_embedding;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  return a.asv_dim_ == b.asv_dim_ && a.cm_dim_ == b.cm_dim_ &&
         a.records_ == b.records_;
}

void EmbeddingStore::add(StoreRecord record) {
  record.meta.validate();
  if (record.asv_embedding.dim() != asv_dim_)
    throw ContractViolation("store add: ASV embedding dim mismatch for " +
                            record.meta.utt_id);
  if (record.cm_embedding.dim() != cm_dim_)
    throw ContractViolation("store add: CM embedding dim mismatch for " +
                            record.meta.utt_id);
  if (index_.count(record.meta.utt_id) != 0)
    throw ContractViolation("store add: duplicate utterance id " +
                            record.meta.utt_id);
  index_.emplace(record.meta.utt_id, records_.size());
  records_.push_back(std::move(record));
}

const StoreRecord* EmbeddingStore::find(const std::string& utt_id) const {
  auto it = index_.find(utt_id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const StoreRecord& EmbeddingStore::require(const std::string& utt_id) const {
  const StoreRecord* rec = find(utt_id);
  if (rec == nullptr)
    throw ContractViolation("store: unknown utterance id " + utt_id);
  return *rec;
}

std::vector<UtteranceMeta> EmbeddingStore::metadata() const {
  std::vector<UtteranceMeta> out;
  out.reserve(records_.size());
  for (const StoreRecord& r : records_) out.push_back(r.meta);
  return out;
}

void SynthConfig::validate() const {
  if (n_speakers < 2)
    throw ContractViolation("synth config: need at least 2 speakers");
  if (asv_dim == 0 || cm_dim == 0)
    throw ContractViolation("synth config: embedding dims must be positive");
  if (spoof_mimicry < 0.0 || spoof_mimicry > 1.0)
    throw ContractViolation("synth config: mimicry must be in [0, 1]");
  if (cm_separation < 0.0)
    throw ContractViolation("synth config: cm_separation must be >= 0");
  if (speaker_noise < 0.0)
    throw ContractViolation("synth config: speaker_noise must be >= 0");
}

namespace {

Vector random_unit(Rng& rng, std::size_t dim) {
  Vector v(dim);
  double n = 0.0;
  do {
    for (std::size_t i = 0; i < dim; ++i) v[i] = gaussian(rng);
    n = norm2(v);
  } while (n <= 1e-12);
  for (std::size_t i = 0; i < dim; ++i) v[i] /= n;
  return v;
}

// Gaussian perturbation with expected squared norm `spread^2`, i.e. the
// per-coordinate deviation shrinks with dimension so `spread` is comparable
// across embedding widths.
Vector gaussian_drift(Rng& rng, std::size_t dim, double spread) {
  Vector v(dim);
  const double scale = spread / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < dim; ++i) v[i] = gaussian(rng) * scale;
  return v;
}

std::string pad4(std::size_t v) {
  std::string s = std::to_string(v);
  while (s.size() < 4) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

EmbeddingStore generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, 0x5e11);
  EmbeddingStore store(cfg.asv_dim, cfg.cm_dim);

  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    const std::string speaker = "spk" + pad4(s);
    const Vector mean = random_unit(rng, cfg.asv_dim);

    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
      Vector asv = mean;
      axpy(asv, 1.0, gaussian_drift(rng, cfg.asv_dim, cfg.speaker_noise));
      asv = l2_normalize(asv);

      Vector cm(cfg.cm_dim);
      for (std::size_t i = 0; i < cfg.cm_dim; ++i) cm[i] = gaussian(rng);
      cm[0] += cfg.cm_separation / 2.0;

      store.add({{speaker + "-bf-" + pad4(u), speaker, Authenticity::BonaFide,
                  ""},
                 std::move(asv),
                 std::move(cm)});
    }

    for (std::size_t u = 0; u < cfg.spoofs_per_speaker; ++u) {
      Vector asv(cfg.asv_dim);
      const Vector stray = random_unit(rng, cfg.asv_dim);
      for (std::size_t i = 0; i < cfg.asv_dim; ++i)
        asv[i] = cfg.spoof_mimicry * mean[i] +
                 (1.0 - cfg.spoof_mimicry) * stray[i];
      axpy(asv, 1.0, gaussian_drift(rng, cfg.asv_dim, cfg.speaker_noise));
      asv = l2_normalize(asv);

      Vector cm(cfg.cm_dim);
      for (std::size_t i = 0; i < cfg.cm_dim; ++i) cm[i] = gaussian(rng);
      cm[0] -= cfg.cm_separation / 2.0;

      const std::string attack = "A0" + std::to_string(1 + u % 6);
      store.add({{speaker + "-sp-" + pad4(u), speaker, Authenticity::Spoof,
                  attack},
                 std::move(asv),
                 std::move(cm)});
    }
  }
  return store;
}

void write_store(const EmbeddingStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  ByteWriter w(out);
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(store.asv_dim()));
  w.u32(static_cast<std::uint32_t>(store.cm_dim()));
  w.u64(store.size());
  for (const StoreRecord& rec : store.records()) {
    if (!rec.asv_embedding.all_finite() || !rec.cm_embedding.all_finite())
      throw ContractViolation("store write: non-finite embedding for " +
                              rec.meta.utt_id);
    w.str16(rec.meta.utt_id);
    w.str16(rec.meta.speaker_id);
    w.u8(static_cast<std::uint8_t>(rec.meta.authenticity));
    w.str16(rec.meta.attack_id);
    for (double v : rec.asv_embedding.data()) w.f64(v);
    for (double v : rec.cm_embedding.data()) w.f64(v);
  }
  if (!out) throw IoError("short write to " + path);
}

EmbeddingStore read_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  ByteReader r(in);

  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(ParseFault::BadMagic, 0, "not an embedding store file");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw ParseError(ParseFault::BadVersion, 4,
                     "store version " + std::to_string(version));
  const std::uint32_t asv_dim = r.u32();
  const std::uint32_t cm_dim = r.u32();
  if (asv_dim == 0 || cm_dim == 0)
    throw ParseError(ParseFault::DimensionMismatch, 8,
                     "embedding dimensions must be positive");
  const std::uint64_t count = r.u64();

  EmbeddingStore store(asv_dim, cm_dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_offset = r.offset();
    StoreRecord rec;
    rec.meta.utt_id = r.str16();
    rec.meta.speaker_id = r.str16();
    const std::uint8_t auth = r.u8();
    if (auth > 1)
      throw ParseError(ParseFault::Malformed, record_offset,
                       "authenticity byte out of range");
    rec.meta.authenticity = static_cast<Authenticity>(auth);
    rec.meta.attack_id = r.str16();
    rec.asv_embedding = Vector(asv_dim);
    for (std::uint32_t j = 0; j < asv_dim; ++j) rec.asv_embedding[j] = r.f64();
    rec.cm_embedding = Vector(cm_dim);
    for (std::uint32_t j = 0; j < cm_dim; ++j) rec.cm_embedding[j] = r.f64();
    if (!rec.asv_embedding.all_finite() || !rec.cm_embedding.all_finite())
      throw ParseError(ParseFault::Malformed, record_offset,
                       "non-finite embedding value in record " +
                           std::to_string(i));
    try {
      store.add(std::move(rec));
    } catch (const ContractViolation& e) {
      throw ParseError(ParseFault::Malformed, record_offset, e.what());
    }
  }
  return store;
}

void write_metadata_tsv(const std::vector<UtteranceMeta>& metas,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const UtteranceMeta& m : metas) {
    m.validate();
    out << m.utt_id << '\t' << m.speaker_id << '\t'
        << (m.authenticity == Authenticity::Spoof ? "spoof" : "bonafide")
        << '\t' << (m.attack_id.empty() ? "-" : m.attack_id) << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<UtteranceMeta> read_metadata_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<UtteranceMeta> metas;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    UtteranceMeta m;
    std::string auth, attack;
    if (!std::getline(ss, m.utt_id, '\t') ||
        !std::getline(ss, m.speaker_id, '\t') ||
        !std::getline(ss, auth, '\t') || !std::getline(ss, attack))
      throw ParseError(ParseFault::Malformed, lineno,
                       "metadata line needs 4 tab-separated fields");
    if (auth == "bonafide") {
      m.authenticity = Authenticity::BonaFide;
    } else if (auth == "spoof") {
      m.authenticity = Authenticity::Spoof;
    } else {
      throw ParseError(ParseFault::Malformed, lineno,
                       "authenticity must be bonafide|spoof, got " + auth);
    }
    m.attack_id = attack == "-" ? "" : attack;
    try {
      m.validate();
    } catch (const ContractViolation& e) {
      throw ParseError(ParseFault::Malformed, lineno, e.what());
    }
    metas.push_back(std::move(m));
  }
  return metas;
}

}  // namespace saga
