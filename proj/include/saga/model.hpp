#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "saga/numerics.hpp"

namespace saga {

// CM-score integration strategies: gate the ASV embedding right after
// normalization (early), gate the post-head activation just before the final
// layer (late), or fuse scalar scores through a single affine layer.
enum class Strategy : std::uint8_t {
  EarlyGate = 0,   // s1
  LateGate = 1,    // s2
  ScoreFusion = 2  // s3
};

const char* to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& s);  // "s1" | "s2" | "s3"

enum class ParamGroupTag : std::uint8_t { CmPath = 0, AsvPath = 1, Joint = 2 };
const char* to_string(ParamGroupTag tag);

struct ModelConfig {
  Strategy strategy = Strategy::EarlyGate;
  std::size_t asv_dim = 32;
  std::size_t cm_dim = 16;
  std::size_t hidden_cm = 0;    // 0 -> cm_dim
  std::size_t hidden_asv = 0;   // 0 -> asv_dim
  std::size_t hidden_post = 0;  // 0 -> asv_dim
  bool use_batchnorm = false;
  double dropout_rate = 0.0;  // 0 disables dropout
  std::uint64_t seed = 1;

  ModelConfig resolved() const;  // fills dimension-preserving defaults
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct AffineLayer {
  Matrix w;
  Vector b;
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

// Per-feature normalization layer. Forward passes normalize with the running
// statistics (treated as constants in backward); training folds observed
// batch statistics into them after each update step.
struct BatchNormLayer {
  Vector gamma, beta;                // trainable
  Vector running_mean, running_var;  // buffers

  static BatchNormLayer make(std::size_t dim);
  Vector apply(const Vector& z) const;
};

enum class Mode : std::uint8_t { Train = 0, Infer = 1 };

// Selects the dropout-mask stream for one forward pass so results do not
// depend on scheduling.
struct DropoutKey {
  std::uint64_t step = 0;
  std::uint64_t trial = 0;
};

// Aggregated enrollment + test embeddings for one trial.
struct TrialInput {
  Vector enroll_asv;
  Vector test_asv;
  Vector enroll_cm;
  Vector test_cm;
};

template <typename SpanT>
struct BasicParamBlock {
  std::string name;
  ParamGroupTag group;
  bool trainable;  // false for BN running statistics
  std::size_t rows, cols;
  SpanT values;
};
using ParamBlock = BasicParamBlock<std::span<double>>;
using ConstParamBlock = BasicParamBlock<std::span<const double>>;

struct FusionModel {
  ModelConfig cfg;  // stored in resolved form

  // CM path (all strategies). The two structural activations share one w_a.
  TReluParams shared_wa;
  AffineLayer cm_fc1, cm_fc2, cm_fc3, cm_out;
  BatchNormLayer cm_bn1, cm_bn2;

  // ASV path and post-gate head (gating strategies only).
  AffineLayer asv_fc;
  BatchNormLayer asv_bn;
  AffineLayer post_fc, post_out;
  BatchNormLayer post_bn;

  // Score-fusion head (ScoreFusion only): one affine over (asv, cm) scores.
  AffineLayer fuse;

  // Bumped on every parameter update; traces record it so stale traces are
  // rejected by backward().
  std::uint64_t revision = 0;

  // Every parameter block exactly once, in group order (CmPath, AsvPath,
  // Joint). Non-trainable BN buffers are included for serialization.
  std::vector<ParamBlock> blocks();
  std::vector<ConstParamBlock> blocks() const;

  std::size_t trainable_parameter_count() const;
  std::uint64_t group_digest(ParamGroupTag tag) const;  // trainable bytes
};

FusionModel build_model(const ModelConfig& cfg);

struct ForwardTrace {
  Strategy strategy = Strategy::EarlyGate;
  Mode mode = Mode::Infer;
  std::uint64_t model_revision = 0;
  // Hash of the piecewise-linear region (ReLU/tReLU sign patterns plus
  // normalization degeneracy flags); used to exclude kink-adjacent
  // perturbations from finite-difference checks.
  std::uint64_t kink_signature = 0;

  // Cached inputs.
  Vector cm_in, asv_in;
  Vector enroll_asv, test_asv;

  // CM path: affine -> (bn) -> shared-w_a activation -> (dropout), twice,
  // then affine -> L2 norm -> affine(->1) -> sigmoid.
  Vector cm_z1, cm_z1n, cm_u1, cm_a1, cm_d1;
  Vector cm_z2, cm_z2n, cm_u2, cm_a2, cm_d2;
  Vector cm_z3, cm_n3;
  double cm_logit = 0.0;
  double cm_score = 0.0;

  // ASV path.
  Vector asv_z, asv_zn, asv_r, asv_d;
  Vector asv_embedding;  // unit or zero norm; ScoreFusion: 1-dim [asv_score]
  double asv_score = 0.0;  // ScoreFusion only: (1 + cosine) / 2

  // Post head.
  Vector post_in, post_z, post_zn, post_r, post_d;
  // Gated representation: EarlyGate: cm_score * asv_embedding; LateGate:
  // cm_score * post_d; ScoreFusion: [asv_score, cm_score].
  Vector gated;
  double sasv_logit = 0.0;
  double sasv_score = 0.0;

  // Dropout masks actually applied (entries 0 or 1/(1-rate)); empty when
  // dropout was inactive.
  Vector mask_cm1, mask_cm2, mask_asv, mask_post;
};

ForwardTrace forward(const FusionModel& model, const TrialInput& input,
                     Mode mode, DropoutKey key = {});

struct BnGrads {
  Vector gamma, beta;
};

// Gradient of the loss w.r.t. every trainable parameter, in the same block
// layout as the owning model.
struct Gradients {
  Strategy strategy = Strategy::EarlyGate;
  bool use_batchnorm = false;
  Matrix wa;
  AffineLayer cm_fc1, cm_fc2, cm_fc3, cm_out;
  BnGrads cm_bn1, cm_bn2;
  AffineLayer asv_fc;
  BnGrads asv_bn;
  AffineLayer post_fc, post_out;
  BnGrads post_bn;
  AffineLayer fuse;

  // Trainable blocks, index-aligned with the trainable entries of
  // FusionModel::blocks().
  std::vector<ParamBlock> blocks();

  void scale(double factor);
  void accumulate(Gradients& other);
};

Gradients zero_gradients(const FusionModel& model);

// Exact reverse-mode gradients given the upstream loss gradients w.r.t. the
// two output logits. The CM score's influence on the gate is handled here, so
// callers only supply the direct loss terms.
Gradients backward(const FusionModel& model, const ForwardTrace& trace,
                   double d_loss_d_sasv_logit, double d_loss_d_cm_logit);

// Multiplicative gate: the CM score scales the ASV embedding so spoofs
// (score near 0) are suppressed and bona fide inputs pass through.
Vector score_gate(double cm_score, const Vector& asv_embedding);

// Arithmetic mean of a non-empty enrollment embedding set.
Vector enroll_aggregate(std::span<const Vector> embeddings);

// Flattened views of the trainable parameters; used by the optimizer and the
// finite-difference checker.
std::vector<double> flatten_parameters(const FusionModel& model);
void scatter_parameters(FusionModel& model, std::span<const double> values);
std::vector<double> flatten_gradients(Gradients& grads);

// Checkpoint file: magic "SAGA", version, config, then parameter blocks in
// group order as little-endian f64. Identical runs produce identical bytes.
void write_checkpoint(const FusionModel& model, const std::string& path);
FusionModel read_checkpoint(const std::string& path);

}  // namespace saga
