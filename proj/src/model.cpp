#include "saga/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "saga/errors.hpp"
#include "saga/grad_check.hpp"
#include "saga/rng.hpp"

namespace saga {

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::EarlyGate: return "s1";
    case Strategy::LateGate: return "s2";
    case Strategy::ScoreFusion: return "s3";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "s1" || s == "S1") return Strategy::EarlyGate;
  if (s == "s2" || s == "S2") return Strategy::LateGate;
  if (s == "s3" || s == "S3") return Strategy::ScoreFusion;
  throw ContractViolation("unknown strategy: " + s + " (want s1|s2|s3)");
}

const char* to_string(ParamGroupTag tag) {
  switch (tag) {
    case ParamGroupTag::CmPath: return "cm";
    case ParamGroupTag::AsvPath: return "asv";
    case ParamGroupTag::Joint: return "joint";
  }
  return "?";
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig out = *this;
  if (out.hidden_cm == 0) out.hidden_cm = out.cm_dim;
  if (out.hidden_asv == 0) out.hidden_asv = out.asv_dim;
  if (out.hidden_post == 0) out.hidden_post = out.asv_dim;
  return out;
}

void ModelConfig::validate() const {
  if (asv_dim == 0 || cm_dim == 0)
    throw ContractViolation("model config: embedding dims must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ContractViolation("model config: dropout rate must be in [0, 1)");
}

BatchNormLayer BatchNormLayer::make(std::size_t dim) {
  BatchNormLayer bn;
  bn.gamma = Vector(dim, 1.0);
  bn.beta = Vector(dim, 0.0);
  bn.running_mean = Vector(dim, 0.0);
  bn.running_var = Vector(dim, 1.0);
  return bn;
}

Vector BatchNormLayer::apply(const Vector& z) const {
  Vector out(z.dim());
  for (std::size_t i = 0; i < z.dim(); ++i) {
    const double inv_std = 1.0 / std::sqrt(running_var[i] + kBnEpsilon);
    out[i] = gamma[i] * (z[i] - running_mean[i]) * inv_std + beta[i];
  }
  return out;
}

namespace {

AffineLayer init_affine(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  AffineLayer layer;
  layer.w = Matrix(out_dim, in_dim);
  layer.b = Vector(out_dim, 0.0);
  const double bound =
      std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (double& v : layer.w.data()) v = uniform_in(rng, -bound, bound);
  return layer;
}

bool has_gate_paths(Strategy s) { return s != Strategy::ScoreFusion; }

template <typename ModelT, typename BlockT, typename SpanMaker>
std::vector<BlockT> enumerate_blocks(ModelT& m, SpanMaker span_of) {
  std::vector<BlockT> out;
  const bool bn = m.cfg.use_batchnorm;
  auto push = [&](const char* name, ParamGroupTag group, bool trainable,
                  std::size_t rows, std::size_t cols, auto& storage) {
    out.push_back(BlockT{name, group, trainable, rows, cols,
                         span_of(storage)});
  };
  auto push_affine = [&](const char* wname, const char* bname,
                         ParamGroupTag group, auto& layer) {
    push(wname, group, true, layer.w.rows(), layer.w.cols(), layer.w);
    push(bname, group, true, layer.b.dim(), 1, layer.b);
  };
  auto push_bn = [&](const char* prefix, ParamGroupTag group, auto& layer) {
    const std::string p(prefix);
    out.push_back(BlockT{p + ".gamma", group, true, layer.gamma.dim(), 1,
                         span_of(layer.gamma)});
    out.push_back(BlockT{p + ".beta", group, true, layer.beta.dim(), 1,
                         span_of(layer.beta)});
    out.push_back(BlockT{p + ".mean", group, false, layer.running_mean.dim(),
                         1, span_of(layer.running_mean)});
    out.push_back(BlockT{p + ".var", group, false, layer.running_var.dim(), 1,
                         span_of(layer.running_var)});
  };

  // CM path
  push("cm.wa", ParamGroupTag::CmPath, true, m.shared_wa.w_a.rows(),
       m.shared_wa.w_a.cols(), m.shared_wa.w_a);
  push_affine("cm.fc1.w", "cm.fc1.b", ParamGroupTag::CmPath, m.cm_fc1);
  if (bn) push_bn("cm.bn1", ParamGroupTag::CmPath, m.cm_bn1);
  push_affine("cm.fc2.w", "cm.fc2.b", ParamGroupTag::CmPath, m.cm_fc2);
  if (bn) push_bn("cm.bn2", ParamGroupTag::CmPath, m.cm_bn2);
  push_affine("cm.fc3.w", "cm.fc3.b", ParamGroupTag::CmPath, m.cm_fc3);
  push_affine("cm.out.w", "cm.out.b", ParamGroupTag::CmPath, m.cm_out);

  if (has_gate_paths(m.cfg.strategy)) {
    push_affine("asv.fc.w", "asv.fc.b", ParamGroupTag::AsvPath, m.asv_fc);
    if (bn) push_bn("asv.bn", ParamGroupTag::AsvPath, m.asv_bn);
    push_affine("post.fc.w", "post.fc.b", ParamGroupTag::Joint, m.post_fc);
    if (bn) push_bn("post.bn", ParamGroupTag::Joint, m.post_bn);
    push_affine("post.out.w", "post.out.b", ParamGroupTag::Joint, m.post_out);
  } else {
    push_affine("fuse.w", "fuse.b", ParamGroupTag::Joint, m.fuse);
  }
  return out;
}

}  // namespace

std::vector<ParamBlock> FusionModel::blocks() {
  return enumerate_blocks<FusionModel, ParamBlock>(
      *this, [](auto& s) { return std::span<double>(s.data()); });
}

std::vector<ConstParamBlock> FusionModel::blocks() const {
  return enumerate_blocks<const FusionModel, ConstParamBlock>(
      *this, [](const auto& s) { return std::span<const double>(s.data()); });
}

std::size_t FusionModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const ConstParamBlock& b : blocks())
    if (b.trainable) n += b.values.size();
  return n;
}

std::uint64_t FusionModel::group_digest(ParamGroupTag tag) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ConstParamBlock& b : blocks()) {
    if (b.group != tag || !b.trainable) continue;
    h = fnv1a(b.values.data(), b.values.size_bytes(), h);
  }
  return h;
}

FusionModel build_model(const ModelConfig& raw_cfg) {
  raw_cfg.validate();
  const ModelConfig cfg = raw_cfg.resolved();
  FusionModel m;
  m.cfg = cfg;
  Rng rng = make_rng(cfg.seed, 0x1417);

  m.shared_wa = TReluParams::identity(cfg.hidden_cm);
  m.cm_fc1 = init_affine(cfg.hidden_cm, 2 * cfg.cm_dim, rng);
  m.cm_fc2 = init_affine(cfg.hidden_cm, cfg.hidden_cm, rng);
  m.cm_fc3 = init_affine(cfg.hidden_cm, cfg.hidden_cm, rng);
  m.cm_out = init_affine(1, cfg.hidden_cm, rng);
  if (cfg.use_batchnorm) {
    m.cm_bn1 = BatchNormLayer::make(cfg.hidden_cm);
    m.cm_bn2 = BatchNormLayer::make(cfg.hidden_cm);
  }

  if (has_gate_paths(cfg.strategy)) {
    m.asv_fc = init_affine(cfg.hidden_asv, 2 * cfg.asv_dim, rng);
    m.post_fc = init_affine(cfg.hidden_post, cfg.hidden_asv, rng);
    m.post_out = init_affine(1, cfg.hidden_post, rng);
    if (cfg.use_batchnorm) {
      m.asv_bn = BatchNormLayer::make(cfg.hidden_asv);
      m.post_bn = BatchNormLayer::make(cfg.hidden_post);
    }
  } else {
    m.fuse = init_affine(1, 2, rng);
  }
  return m;
}

Vector score_gate(double cm_score, const Vector& asv_embedding) {
  Vector out(asv_embedding.dim());
  for (std::size_t i = 0; i < out.dim(); ++i)
    out[i] = cm_score * asv_embedding[i];
  return out;
}

Vector enroll_aggregate(std::span<const Vector> embeddings) {
  if (embeddings.empty())
    throw ContractViolation("enroll_aggregate: empty enrollment set");
  return mean_of(embeddings);
}

namespace {

struct KinkHasher {
  std::uint64_t h = 0xcbf29ce484222325ULL;

  void add_bit(bool bit) {
    const unsigned char byte = bit ? 1 : 0;
    h = fnv1a(&byte, 1, h);
  }
  void add_sign_pattern(const Vector& v) {
    for (std::size_t i = 0; i < v.dim(); ++i) add_bit(v[i] > 0.0);
  }
};

Vector relu_backward(const Vector& d_post, const Vector& pre) {
  Vector out(pre.dim());
  for (std::size_t i = 0; i < pre.dim(); ++i)
    out[i] = pre[i] > 0.0 ? d_post[i] : 0.0;
  return out;
}

Vector draw_dropout_mask(std::size_t dim, double rate, Rng& rng) {
  Vector mask(dim);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < dim; ++i)
    mask[i] = uniform_unit(rng) >= rate ? keep_scale : 0.0;
  return mask;
}

Vector apply_mask(const Vector& x, const Vector& mask) {
  if (mask.empty()) return x;
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] * mask[i];
  return out;
}

// dL/dz from dL/d(bn(z)) with running statistics held constant.
Vector bn_backward(const BatchNormLayer& bn, const Vector& z,
                   const Vector& d_out, BnGrads& grads) {
  Vector d_z(z.dim());
  for (std::size_t i = 0; i < z.dim(); ++i) {
    const double inv_std = 1.0 / std::sqrt(bn.running_var[i] + kBnEpsilon);
    const double zhat = (z[i] - bn.running_mean[i]) * inv_std;
    grads.gamma[i] += d_out[i] * zhat;
    grads.beta[i] += d_out[i];
    d_z[i] = d_out[i] * bn.gamma[i] * inv_std;
  }
  return d_z;
}

// dL/dx for y = w x + b, accumulating the layer's weight/bias gradients.
Vector affine_backward(const AffineLayer& layer, const Vector& x,
                       const Vector& d_out, AffineLayer& grads) {
  add_outer(grads.w, d_out, x);
  axpy(grads.b, 1.0, d_out);
  return matvec_transposed(layer.w, d_out);
}

}  // namespace

ForwardTrace forward(const FusionModel& model, const TrialInput& input,
                     Mode mode, DropoutKey key) {
  const ModelConfig& cfg = model.cfg;
  if (input.enroll_asv.dim() != cfg.asv_dim ||
      input.test_asv.dim() != cfg.asv_dim)
    throw ContractViolation("forward: ASV input dim mismatch");
  if (input.enroll_cm.dim() != cfg.cm_dim ||
      input.test_cm.dim() != cfg.cm_dim)
    throw ContractViolation("forward: CM input dim mismatch");

  ForwardTrace t;
  t.strategy = cfg.strategy;
  t.mode = mode;
  t.model_revision = model.revision;

  const bool dropout_active = mode == Mode::Train && cfg.dropout_rate > 0.0;
  Rng mask_rng = make_rng(mix_seed(cfg.seed, 0xd56f), key.step, key.trial);
  const bool bn = cfg.use_batchnorm;
  KinkHasher kink;

  // --- CM path -------------------------------------------------------------
  t.cm_in = concat(input.enroll_cm, input.test_cm);
  t.cm_z1 = affine(model.cm_fc1.w, t.cm_in, model.cm_fc1.b);
  t.cm_z1n = bn ? model.cm_bn1.apply(t.cm_z1) : t.cm_z1;
  t.cm_u1 = matvec(model.shared_wa.w_a, t.cm_z1n);
  kink.add_sign_pattern(t.cm_u1);
  t.cm_a1 = relu(t.cm_u1);
  if (dropout_active)
    t.mask_cm1 = draw_dropout_mask(t.cm_a1.dim(), cfg.dropout_rate, mask_rng);
  t.cm_d1 = apply_mask(t.cm_a1, t.mask_cm1);

  t.cm_z2 = affine(model.cm_fc2.w, t.cm_d1, model.cm_fc2.b);
  t.cm_z2n = bn ? model.cm_bn2.apply(t.cm_z2) : t.cm_z2;
  t.cm_u2 = matvec(model.shared_wa.w_a, t.cm_z2n);
  kink.add_sign_pattern(t.cm_u2);
  t.cm_a2 = relu(t.cm_u2);
  if (dropout_active)
    t.mask_cm2 = draw_dropout_mask(t.cm_a2.dim(), cfg.dropout_rate, mask_rng);
  t.cm_d2 = apply_mask(t.cm_a2, t.mask_cm2);

  t.cm_z3 = affine(model.cm_fc3.w, t.cm_d2, model.cm_fc3.b);
  kink.add_bit(norm2(t.cm_z3) > kL2Epsilon);
  t.cm_n3 = l2_normalize(t.cm_z3);
  {
    double acc = model.cm_out.b[0];
    for (std::size_t i = 0; i < t.cm_n3.dim(); ++i)
      acc += model.cm_out.w.at(0, i) * t.cm_n3[i];
    t.cm_logit = acc;
  }
  t.cm_score = sigmoid(t.cm_logit);

  // --- ASV path and fusion ---------------------------------------------------
  if (cfg.strategy == Strategy::ScoreFusion) {
    t.enroll_asv = input.enroll_asv;
    t.test_asv = input.test_asv;
    t.asv_score =
        (1.0 + cosine_similarity(input.enroll_asv, input.test_asv)) / 2.0;
    t.asv_embedding = Vector{t.asv_score};
    t.gated = Vector{t.asv_score, t.cm_score};
    double acc = model.fuse.b[0];
    acc += model.fuse.w.at(0, 0) * t.gated[0];
    acc += model.fuse.w.at(0, 1) * t.gated[1];
    t.sasv_logit = acc;
  } else {
    t.asv_in = concat(input.enroll_asv, input.test_asv);
    t.asv_z = affine(model.asv_fc.w, t.asv_in, model.asv_fc.b);
    t.asv_zn = bn ? model.asv_bn.apply(t.asv_z) : t.asv_z;
    kink.add_sign_pattern(t.asv_zn);
    t.asv_r = relu(t.asv_zn);
    if (dropout_active)
      t.mask_asv =
          draw_dropout_mask(t.asv_r.dim(), cfg.dropout_rate, mask_rng);
    t.asv_d = apply_mask(t.asv_r, t.mask_asv);
    kink.add_bit(norm2(t.asv_d) > kL2Epsilon);
    t.asv_embedding = l2_normalize(t.asv_d);

    if (cfg.strategy == Strategy::EarlyGate) {
      t.gated = score_gate(t.cm_score, t.asv_embedding);
      t.post_in = t.gated;
    } else {
      t.post_in = t.asv_embedding;
    }

    t.post_z = affine(model.post_fc.w, t.post_in, model.post_fc.b);
    t.post_zn = bn ? model.post_bn.apply(t.post_z) : t.post_z;
    kink.add_sign_pattern(t.post_zn);
    t.post_r = relu(t.post_zn);
    if (dropout_active)
      t.mask_post =
          draw_dropout_mask(t.post_r.dim(), cfg.dropout_rate, mask_rng);
    t.post_d = apply_mask(t.post_r, t.mask_post);

    const Vector& head_in = cfg.strategy == Strategy::LateGate
                                ? (t.gated = score_gate(t.cm_score, t.post_d))
                                : t.post_d;
    double acc = model.post_out.b[0];
    for (std::size_t i = 0; i < head_in.dim(); ++i)
      acc += model.post_out.w.at(0, i) * head_in[i];
    t.sasv_logit = acc;
  }

  t.sasv_score = sigmoid(t.sasv_logit);
  t.kink_signature = kink.h;
  return t;
}

Gradients zero_gradients(const FusionModel& model) {
  const ModelConfig& cfg = model.cfg;
  Gradients g;
  g.strategy = cfg.strategy;
  g.use_batchnorm = cfg.use_batchnorm;
  auto zeros_like_affine = [](const AffineLayer& layer) {
    return AffineLayer{Matrix(layer.w.rows(), layer.w.cols()),
                       Vector(layer.b.dim())};
  };
  auto zeros_like_bn = [](const BatchNormLayer& layer) {
    return BnGrads{Vector(layer.gamma.dim()), Vector(layer.beta.dim())};
  };
  g.wa = Matrix(cfg.hidden_cm, cfg.hidden_cm);
  g.cm_fc1 = zeros_like_affine(model.cm_fc1);
  g.cm_fc2 = zeros_like_affine(model.cm_fc2);
  g.cm_fc3 = zeros_like_affine(model.cm_fc3);
  g.cm_out = zeros_like_affine(model.cm_out);
  if (cfg.use_batchnorm) {
    g.cm_bn1 = zeros_like_bn(model.cm_bn1);
    g.cm_bn2 = zeros_like_bn(model.cm_bn2);
  }
  if (has_gate_paths(cfg.strategy)) {
    g.asv_fc = zeros_like_affine(model.asv_fc);
    g.post_fc = zeros_like_affine(model.post_fc);
    g.post_out = zeros_like_affine(model.post_out);
    if (cfg.use_batchnorm) {
      g.asv_bn = zeros_like_bn(model.asv_bn);
      g.post_bn = zeros_like_bn(model.post_bn);
    }
  } else {
    g.fuse = zeros_like_affine(model.fuse);
  }
  return g;
}

std::vector<ParamBlock> Gradients::blocks() {
  std::vector<ParamBlock> out;
  const bool bn = use_batchnorm;
  auto push = [&](const char* name, ParamGroupTag group, auto& storage,
                  std::size_t rows, std::size_t cols) {
    out.push_back(
        ParamBlock{name, group, true, rows, cols, std::span<double>(storage.data())});
  };
  auto push_affine = [&](const char* wname, const char* bname,
                         ParamGroupTag group, AffineLayer& layer) {
    push(wname, group, layer.w, layer.w.rows(), layer.w.cols());
    push(bname, group, layer.b, layer.b.dim(), 1);
  };
  auto push_bn = [&](const char* gname, const char* bname, ParamGroupTag group,
                     BnGrads& layer) {
    push(gname, group, layer.gamma, layer.gamma.dim(), 1);
    push(bname, group, layer.beta, layer.beta.dim(), 1);
  };

  push("cm.wa", ParamGroupTag::CmPath, wa, wa.rows(), wa.cols());
  push_affine("cm.fc1.w", "cm.fc1.b", ParamGroupTag::CmPath, cm_fc1);
  if (bn) push_bn("cm.bn1.gamma", "cm.bn1.beta", ParamGroupTag::CmPath, cm_bn1);
  push_affine("cm.fc2.w", "cm.fc2.b", ParamGroupTag::CmPath, cm_fc2);
  if (bn) push_bn("cm.bn2.gamma", "cm.bn2.beta", ParamGroupTag::CmPath, cm_bn2);
  push_affine("cm.fc3.w", "cm.fc3.b", ParamGroupTag::CmPath, cm_fc3);
  push_affine("cm.out.w", "cm.out.b", ParamGroupTag::CmPath, cm_out);
  if (strategy != Strategy::ScoreFusion) {
    push_affine("asv.fc.w", "asv.fc.b", ParamGroupTag::AsvPath, asv_fc);
    if (bn) push_bn("asv.bn.gamma", "asv.bn.beta", ParamGroupTag::AsvPath, asv_bn);
    push_affine("post.fc.w", "post.fc.b", ParamGroupTag::Joint, post_fc);
    if (bn) push_bn("post.bn.gamma", "post.bn.beta", ParamGroupTag::Joint, post_bn);
    push_affine("post.out.w", "post.out.b", ParamGroupTag::Joint, post_out);
  } else {
    push_affine("fuse.w", "fuse.b", ParamGroupTag::Joint, fuse);
  }
  return out;
}

void Gradients::scale(double factor) {
  for (ParamBlock& b : blocks())
    for (double& v : b.values) v *= factor;
}

void Gradients::accumulate(Gradients& other) {
  auto mine = blocks();
  auto theirs = other.blocks();
  if (mine.size() != theirs.size())
    throw ContractViolation("gradient accumulate: block mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].values.size() != theirs[i].values.size())
      throw ContractViolation("gradient accumulate: shape mismatch");
    for (std::size_t j = 0; j < mine[i].values.size(); ++j)
      mine[i].values[j] += theirs[i].values[j];
  }
}

Gradients backward(const FusionModel& model, const ForwardTrace& trace,
                   double d_loss_d_sasv_logit, double d_loss_d_cm_logit) {
  const ModelConfig& cfg = model.cfg;
  if (trace.strategy != cfg.strategy)
    throw ContractViolation("backward: trace strategy mismatch");
  if (trace.model_revision != model.revision)
    throw ContractViolation("backward: stale trace (parameters changed)");
  if (trace.mode != Mode::Train)
    throw ContractViolation("backward: trace must come from a Train forward");

  Gradients g = zero_gradients(model);
  const bool bn = cfg.use_batchnorm;

  double d_cm_score = 0.0;  // gate contribution, accumulated below
  const double d_sasv = d_loss_d_sasv_logit;

  if (cfg.strategy == Strategy::ScoreFusion) {
    // sasv_logit = w0 * asv_score + w1 * cm_score + b
    g.fuse.w.at(0, 0) += d_sasv * trace.gated[0];
    g.fuse.w.at(0, 1) += d_sasv * trace.gated[1];
    g.fuse.b[0] += d_sasv;
    d_cm_score = d_sasv * model.fuse.w.at(0, 1);
  } else {
    Vector d_asv_embedding;
    if (cfg.strategy == Strategy::EarlyGate) {
      // head: post_out(post_d), post chain input = gated embedding
      Vector d_post_d(trace.post_d.dim());
      for (std::size_t i = 0; i < d_post_d.dim(); ++i) {
        g.post_out.w.at(0, i) += d_sasv * trace.post_d[i];
        d_post_d[i] = d_sasv * model.post_out.w.at(0, i);
      }
      g.post_out.b[0] += d_sasv;

      Vector d_post_r = apply_mask(d_post_d, trace.mask_post);
      Vector d_post_zn = relu_backward(d_post_r, trace.post_zn);
      Vector d_post_z =
          bn ? bn_backward(model.post_bn, trace.post_z, d_post_zn, g.post_bn)
             : d_post_zn;
      Vector d_gated =
          affine_backward(model.post_fc, trace.post_in, d_post_z, g.post_fc);

      // gate: gated = cm_score * asv_embedding
      d_asv_embedding = Vector(trace.asv_embedding.dim());
      for (std::size_t i = 0; i < d_gated.dim(); ++i) {
        d_asv_embedding[i] = trace.cm_score * d_gated[i];
        d_cm_score += trace.asv_embedding[i] * d_gated[i];
      }
    } else {
      // LateGate head: sasv_logit = post_out(gated), gated = cm_score*post_d
      Vector d_gated(trace.gated.dim());
      for (std::size_t i = 0; i < d_gated.dim(); ++i) {
        g.post_out.w.at(0, i) += d_sasv * trace.gated[i];
        d_gated[i] = d_sasv * model.post_out.w.at(0, i);
      }
      g.post_out.b[0] += d_sasv;

      Vector d_post_d(trace.post_d.dim());
      for (std::size_t i = 0; i < d_gated.dim(); ++i) {
        d_post_d[i] = trace.cm_score * d_gated[i];
        d_cm_score += trace.post_d[i] * d_gated[i];
      }
      Vector d_post_r = apply_mask(d_post_d, trace.mask_post);
      Vector d_post_zn = relu_backward(d_post_r, trace.post_zn);
      Vector d_post_z =
          bn ? bn_backward(model.post_bn, trace.post_z, d_post_zn, g.post_bn)
             : d_post_zn;
      d_asv_embedding =
          affine_backward(model.post_fc, trace.post_in, d_post_z, g.post_fc);
    }

    // ASV path
    Vector d_asv_d = l2_normalize_backward(trace.asv_d, d_asv_embedding);
    Vector d_asv_r = apply_mask(d_asv_d, trace.mask_asv);
    Vector d_asv_zn = relu_backward(d_asv_r, trace.asv_zn);
    Vector d_asv_z =
        bn ? bn_backward(model.asv_bn, trace.asv_z, d_asv_zn, g.asv_bn)
           : d_asv_zn;
    affine_backward(model.asv_fc, trace.asv_in, d_asv_z, g.asv_fc);
  }

  // CM head: upstream loss gradient plus the gate's pull on the score.
  const double d_cm_logit =
      d_loss_d_cm_logit +
      d_cm_score * trace.cm_score * (1.0 - trace.cm_score);

  Vector d_n3(trace.cm_n3.dim());
  for (std::size_t i = 0; i < d_n3.dim(); ++i) {
    g.cm_out.w.at(0, i) += d_cm_logit * trace.cm_n3[i];
    d_n3[i] = d_cm_logit * model.cm_out.w.at(0, i);
  }
  g.cm_out.b[0] += d_cm_logit;

  Vector d_z3 = l2_normalize_backward(trace.cm_z3, d_n3);
  Vector d_d2 = affine_backward(model.cm_fc3, trace.cm_d2, d_z3, g.cm_fc3);

  Vector d_a2 = apply_mask(d_d2, trace.mask_cm2);
  Vector d_u2 = relu_backward(d_a2, trace.cm_u2);
  add_outer(g.wa, d_u2, trace.cm_z2n);  // second shared-w_a site
  Vector d_z2n = matvec_transposed(model.shared_wa.w_a, d_u2);
  Vector d_z2 = bn ? bn_backward(model.cm_bn2, trace.cm_z2, d_z2n, g.cm_bn2)
                   : d_z2n;
  Vector d_d1 = affine_backward(model.cm_fc2, trace.cm_d1, d_z2, g.cm_fc2);

  Vector d_a1 = apply_mask(d_d1, trace.mask_cm1);
  Vector d_u1 = relu_backward(d_a1, trace.cm_u1);
  add_outer(g.wa, d_u1, trace.cm_z1n);  // first shared-w_a site accumulates
  Vector d_z1n = matvec_transposed(model.shared_wa.w_a, d_u1);
  Vector d_z1 = bn ? bn_backward(model.cm_bn1, trace.cm_z1, d_z1n, g.cm_bn1)
                   : d_z1n;
  affine_backward(model.cm_fc1, trace.cm_in, d_z1, g.cm_fc1);

  return g;
}

std::vector<double> flatten_parameters(const FusionModel& model) {
  std::vector<double> out;
  for (const ConstParamBlock& b : model.blocks()) {
    if (!b.trainable) continue;
    out.insert(out.end(), b.values.begin(), b.values.end());
  }
  return out;
}

void scatter_parameters(FusionModel& model, std::span<const double> values) {
  std::size_t pos = 0;
  for (ParamBlock& b : model.blocks()) {
    if (!b.trainable) continue;
    if (pos + b.values.size() > values.size())
      throw ContractViolation("scatter_parameters: too few values");
    for (std::size_t i = 0; i < b.values.size(); ++i)
      b.values[i] = values[pos + i];
    pos += b.values.size();
  }
  if (pos != values.size())
    throw ContractViolation("scatter_parameters: size mismatch");
  ++model.revision;
}

std::vector<double> flatten_gradients(Gradients& grads) {
  std::vector<double> out;
  for (ParamBlock& b : grads.blocks())
    out.insert(out.end(), b.values.begin(), b.values.end());
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'S', 'A', 'G', 'A'};
constexpr std::uint32_t kCkptVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

}  // namespace

void write_checkpoint(const FusionModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  auto put = [&](const void* data, std::size_t size) {
    out.write(static_cast<const char*>(data),
              static_cast<std::streamsize>(size));
  };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_u64 = [&](std::uint64_t v) { put(&v, 8); };
  auto put_u8 = [&](std::uint8_t v) { put(&v, 1); };

  put(kCkptMagic, 4);
  put_u32(kCkptVersion);
  const ModelConfig& cfg = model.cfg;
  put_u8(static_cast<std::uint8_t>(cfg.strategy));
  put_u32(static_cast<std::uint32_t>(cfg.asv_dim));
  put_u32(static_cast<std::uint32_t>(cfg.cm_dim));
  put_u32(static_cast<std::uint32_t>(cfg.hidden_cm));
  put_u32(static_cast<std::uint32_t>(cfg.hidden_asv));
  put_u32(static_cast<std::uint32_t>(cfg.hidden_post));
  put_u8(cfg.use_batchnorm ? 1 : 0);
  put(&cfg.dropout_rate, 8);
  put_u64(cfg.seed);

  const auto blocks = model.blocks();
  put_u32(static_cast<std::uint32_t>(blocks.size()));
  for (const ConstParamBlock& b : blocks) {
    const std::uint16_t name_len = static_cast<std::uint16_t>(b.name.size());
    put(&name_len, 2);
    put(b.name.data(), b.name.size());
    put_u8(static_cast<std::uint8_t>(b.group));
    put_u8(b.trainable ? 1 : 0);
    put_u32(static_cast<std::uint32_t>(b.rows));
    put_u32(static_cast<std::uint32_t>(b.cols));
    put(b.values.data(), b.values.size_bytes());
  }
  if (!out) throw IoError("short write to " + path);
}

FusionModel read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::size_t offset = 0;
  auto get = [&](void* data, std::size_t size) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in.gcount()) != size)
      throw ParseError(ParseFault::Truncated, offset, "unexpected end of file");
    offset += size;
  };
  auto get_u32 = [&] { std::uint32_t v; get(&v, 4); return v; };
  auto get_u64 = [&] { std::uint64_t v; get(&v, 8); return v; };
  auto get_u8 = [&] { std::uint8_t v; get(&v, 1); return v; };

  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ParseError(ParseFault::BadMagic, 0, "not a checkpoint file");
  const std::uint32_t version = get_u32();
  if (version != kCkptVersion)
    throw ParseError(ParseFault::BadVersion, 4,
                     "checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  const std::uint8_t strategy = get_u8();
  if (strategy > 2)
    throw ParseError(ParseFault::Malformed, offset, "strategy byte invalid");
  cfg.strategy = static_cast<Strategy>(strategy);
  cfg.asv_dim = get_u32();
  cfg.cm_dim = get_u32();
  cfg.hidden_cm = get_u32();
  cfg.hidden_asv = get_u32();
  cfg.hidden_post = get_u32();
  cfg.use_batchnorm = get_u8() != 0;
  get(&cfg.dropout_rate, 8);
  cfg.seed = get_u64();
  try {
    cfg.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(ParseFault::DimensionMismatch, 9, e.what());
  }

  FusionModel model = build_model(cfg);
  auto blocks = model.blocks();
  const std::uint32_t count = get_u32();
  if (count != blocks.size())
    throw ParseError(ParseFault::DimensionMismatch, offset - 4,
                     "checkpoint has " + std::to_string(count) +
                         " blocks, model expects " +
                         std::to_string(blocks.size()));
  for (ParamBlock& b : blocks) {
    const std::size_t block_offset = offset;
    std::uint16_t name_len = 0;
    get(&name_len, 2);
    std::string name(name_len, '\0');
    if (name_len > 0) get(name.data(), name_len);
    const std::uint8_t group = get_u8();
    const std::uint8_t trainable = get_u8();
    const std::uint32_t rows = get_u32();
    const std::uint32_t cols = get_u32();
    if (name != b.name || group != static_cast<std::uint8_t>(b.group) ||
        (trainable != 0) != b.trainable || rows != b.rows || cols != b.cols)
      throw ParseError(ParseFault::DimensionMismatch, block_offset,
                       "block " + name + " does not match model layout");
    get(b.values.data(), b.values.size_bytes());
  }
  for (const ParamBlock& b : blocks) {
    for (double v : b.values)
      if (!std::isfinite(v))
        throw ParseError(ParseFault::Malformed, offset,
                         "non-finite parameter in block " + b.name);
  }
  return model;
}

}  // namespace saga
