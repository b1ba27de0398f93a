// Test-side reference implementations, deliberately written naively and
// independently of the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "saga/metrics.hpp"
#include "saga/model.hpp"
#include "saga/numerics.hpp"

namespace oracles {

using saga::ScoreSet;
using saga::TrialLabel;
using saga::Vector;

inline std::vector<double> naive_thresholds(std::vector<double> all) {
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> t;
  t.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    t.push_back(all[i] + (all[i + 1] - all[i]) / 2.0);
  t.push_back(all.back() + 1.0);
  return t;
}

inline double count_le(const std::vector<double>& v, double t) {
  std::size_t n = 0;
  for (double x : v)
    if (x <= t) ++n;
  return static_cast<double>(n) / static_cast<double>(v.size());
}

inline double count_gt(const std::vector<double>& v, double t) {
  std::size_t n = 0;
  for (double x : v)
    if (x > t) ++n;
  return static_cast<double>(n) / static_cast<double>(v.size());
}

struct EerOracle {
  double eer = 0.0;
  double threshold = 0.0;
};

// Exhaustive sweep with the same midpoint candidates and interpolation rule,
// but O(n*m) direct counting.
inline EerOracle brute_force_eer(const std::vector<double>& targets,
                                 const std::vector<double>& impostors) {
  std::vector<double> all = targets;
  all.insert(all.end(), impostors.begin(), impostors.end());
  const std::vector<double> thresholds = naive_thresholds(all);
  double prev_frr = 0.0, prev_far = 1.0, prev_t = thresholds.front();
  for (double t : thresholds) {
    const double frr = count_le(targets, t);
    const double far = count_gt(impostors, t);
    if (frr >= far) {
      if (frr == far) return {frr, t};
      const double denom = (frr - prev_frr) - (far - prev_far);
      const double alpha = denom != 0.0 ? (prev_far - prev_frr) / denom : 0.0;
      return {prev_frr + alpha * (frr - prev_frr),
              prev_t + alpha * (t - prev_t)};
    }
    prev_frr = frr;
    prev_far = far;
    prev_t = t;
  }
  return {prev_frr, prev_t};
}

inline EerOracle brute_force_eer(const ScoreSet& scores) {
  std::vector<double> targets, impostors;
  for (const auto& e : scores.entries) {
    if (e.label == TrialLabel::Target)
      targets.push_back(e.sasv_score);
    else
      impostors.push_back(e.sasv_score);
  }
  return brute_force_eer(targets, impostors);
}

struct ADcfOracle {
  double value = 0.0;
  double threshold = 0.0;
};

inline ADcfOracle brute_force_min_adcf(const ScoreSet& scores,
                                       const saga::ADcfConfig& cfg) {
  std::vector<double> targets, nontargets, spoofs, all;
  for (const auto& e : scores.entries) {
    all.push_back(e.sasv_score);
    switch (e.label) {
      case TrialLabel::Target: targets.push_back(e.sasv_score); break;
      case TrialLabel::NonTarget: nontargets.push_back(e.sasv_score); break;
      case TrialLabel::Spoof: spoofs.push_back(e.sasv_score); break;
    }
  }
  const double denom =
      std::min(cfg.c_miss * cfg.pi_tar,
               cfg.c_fa_non * cfg.pi_non + cfg.c_fa_spf * cfg.pi_spf);
  ADcfOracle best;
  bool first = true;
  for (double t : naive_thresholds(all)) {
    const double cost = cfg.c_miss * cfg.pi_tar * count_le(targets, t) +
                        cfg.c_fa_non * cfg.pi_non * count_gt(nontargets, t) +
                        cfg.c_fa_spf * cfg.pi_spf * count_gt(spoofs, t);
    const double value = cost / denom;
    if (first || value < best.value) {
      best = {value, t};
      first = false;
    }
  }
  return best;
}

// Reference forward pass for the early-gating strategy with plain ReLU in
// place of both structural activations (no batchnorm, no dropout). Used for
// the "identity w_a reduces to ReLU" bitwise check and as an independent
// wiring oracle.
struct PlainReluOutputs {
  double cm_score = 0.0;
  double sasv_score = 0.0;
};

inline PlainReluOutputs plain_relu_s1_forward(const saga::FusionModel& m,
                                              const saga::TrialInput& in) {
  using saga::affine;
  using saga::concat;
  using saga::l2_normalize;
  using saga::relu;
  using saga::sigmoid;

  const Vector x_cm = concat(in.enroll_cm, in.test_cm);
  const Vector a1 = relu(affine(m.cm_fc1.w, x_cm, m.cm_fc1.b));
  const Vector a2 = relu(affine(m.cm_fc2.w, a1, m.cm_fc2.b));
  const Vector n3 = l2_normalize(affine(m.cm_fc3.w, a2, m.cm_fc3.b));
  double cm_logit = m.cm_out.b[0];
  for (std::size_t i = 0; i < n3.dim(); ++i)
    cm_logit += m.cm_out.w.at(0, i) * n3[i];
  const double cm_score = sigmoid(cm_logit);

  const Vector x_asv = concat(in.enroll_asv, in.test_asv);
  const Vector e_asv =
      l2_normalize(relu(affine(m.asv_fc.w, x_asv, m.asv_fc.b)));
  Vector gated(e_asv.dim());
  for (std::size_t i = 0; i < gated.dim(); ++i) gated[i] = cm_score * e_asv[i];

  const Vector p1 = relu(affine(m.post_fc.w, gated, m.post_fc.b));
  double sasv_logit = m.post_out.b[0];
  for (std::size_t i = 0; i < p1.dim(); ++i)
    sasv_logit += m.post_out.w.at(0, i) * p1[i];
  return {cm_score, sigmoid(sasv_logit)};
}

// CM-path-only BCE loss with two independent structural transforms, one per
// activation site. The shared-w_a gradient must equal the sum of the two
// sites' gradients evaluated at wa1 = wa2 = w_a.
inline double unshared_wa_cm_loss(const saga::FusionModel& m,
                                  const saga::Matrix& wa1,
                                  const saga::Matrix& wa2, const Vector& x_cm,
                                  int y_cm) {
  using saga::affine;
  using saga::bce_loss;
  using saga::l2_normalize;
  using saga::matvec;
  using saga::relu;

  const Vector a1 = relu(matvec(wa1, affine(m.cm_fc1.w, x_cm, m.cm_fc1.b)));
  const Vector a2 = relu(matvec(wa2, affine(m.cm_fc2.w, a1, m.cm_fc2.b)));
  const Vector n3 = l2_normalize(affine(m.cm_fc3.w, a2, m.cm_fc3.b));
  double cm_logit = m.cm_out.b[0];
  for (std::size_t i = 0; i < n3.dim(); ++i)
    cm_logit += m.cm_out.w.at(0, i) * n3[i];
  return bce_loss(cm_logit, y_cm);
}

}  // namespace oracles
