#include "saga/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "saga/errors.hpp"
#include "saga/rng.hpp"

namespace saga {

void LossConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    throw ContractViolation("loss config: lambda must be in [0, 1]");
}

TotalLoss total_loss(const ForwardTrace& trace, const TrialLabels& labels,
                     const LossConfig& cfg) {
  cfg.validate();
  TotalLoss out;
  out.loss = cfg.lambda * bce_loss(trace.sasv_logit, labels.y_sasv) +
             (1.0 - cfg.lambda) * bce_loss(trace.cm_logit, labels.y_cm);
  out.d_sasv_logit = cfg.lambda * bce_loss_grad(trace.sasv_logit, labels.y_sasv);
  out.d_cm_logit =
      (1.0 - cfg.lambda) * bce_loss_grad(trace.cm_logit, labels.y_cm);
  return out;
}

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0)
    throw ContractViolation("optimizer: learning rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ContractViolation("optimizer: betas must be in [0, 1)");
  if (epsilon <= 0.0)
    throw ContractViolation("optimizer: epsilon must be positive");
}

OptimizerState::OptimizerState(const OptimizerConfig& cfg,
                               const FusionModel& model)
    : cfg_(cfg) {
  cfg.validate();
  for (const ConstParamBlock& b : model.blocks()) {
    if (!b.trainable) continue;
    m_.emplace_back(b.values.size(), 0.0);
    v_.emplace_back(b.values.size(), 0.0);
    steps_.push_back(0);
  }
}

void OptimizerState::apply_update(FusionModel& model, Gradients& grads,
                                  const std::set<ParamGroupTag>& frozen) {
  if (frozen.count(ParamGroupTag::Joint) != 0)
    throw ContractViolation(
        "apply_update: the joint group must stay unfrozen");

  auto all_blocks = model.blocks();
  std::vector<ParamBlock> params;
  for (ParamBlock& b : all_blocks)
    if (b.trainable) params.push_back(b);
  auto grad_blocks = grads.blocks();
  if (params.size() != grad_blocks.size() || params.size() != m_.size())
    throw ContractViolation("apply_update: gradient layout mismatch");

  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamBlock& p = params[i];
    const ParamBlock& g = grad_blocks[i];
    if (p.name != g.name || p.values.size() != g.values.size())
      throw ContractViolation("apply_update: block mismatch at " + p.name);
    if (frozen.count(p.group) != 0) continue;  // moments stay untouched too

    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t j = 0; j < p.values.size(); ++j)
        p.values[j] -= cfg_.learning_rate * g.values[j];
      ++steps_[i];
      continue;
    }

    const std::uint64_t t = ++steps_[i];
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const double grad = g.values[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad * grad;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.values[j] -=
          cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
  ++model.revision;
}

void AtmmConfig::validate() const {
  if (iters_per_round == 0)
    throw ContractViolation("atmm config: iters_per_round must be >= 1");
  if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
    throw ContractViolation("atmm config: sample_fraction must be in (0, 1]");
  // Both weights stay strictly inside (0, 1) so gradients keep flowing from
  // both tasks in every iteration.
  if (!(lambda_cm_focus > 0.0 && lambda_cm_focus < 1.0) ||
      !(lambda_asv_focus > 0.0 && lambda_asv_focus < 1.0))
    throw ContractViolation("atmm config: lambdas must lie in (0, 1)");
  if (batch_size == 0)
    throw ContractViolation("atmm config: batch_size must be >= 1");
}

void AtmmDatasets::validate() const {
  if (cm_dataset.empty() || asv_dataset.empty())
    throw ContractViolation("atmm datasets: both datasets must be non-empty");
  for (const Trial& t : asv_dataset)
    if (t.label == TrialLabel::Spoof)
      throw ContractViolation(
          "atmm datasets: ASV dataset must not contain spoof trials");
}

TrialInput make_trial_input(const EmbeddingStore& store, const Trial& trial) {
  if (trial.enroll_ids.empty())
    throw ContractViolation("trial for test " + trial.test_id +
                            " has an empty enrollment set");
  std::vector<Vector> enroll_asv;
  std::vector<Vector> enroll_cm;
  enroll_asv.reserve(trial.enroll_ids.size());
  enroll_cm.reserve(trial.enroll_ids.size());
  for (const std::string& id : trial.enroll_ids) {
    const StoreRecord* rec = store.find(id);
    if (rec == nullptr)
      throw ContractViolation("trial for test " + trial.test_id +
                              " references missing utterance " + id);
    enroll_asv.push_back(rec->asv_embedding);
    enroll_cm.push_back(rec->cm_embedding);
  }
  const StoreRecord* test = store.find(trial.test_id);
  if (test == nullptr)
    throw ContractViolation("trial references missing test utterance " +
                            trial.test_id);
  TrialInput input;
  input.enroll_asv = enroll_aggregate(enroll_asv);
  input.enroll_cm = enroll_aggregate(enroll_cm);
  input.test_asv = test->asv_embedding;
  input.test_cm = test->cm_embedding;
  return input;
}

namespace {

// Lists every utterance id the trials need but the store lacks.
void check_trials_resolvable(const EmbeddingStore& store,
                             const std::vector<Trial>& trials) {
  std::string missing;
  std::size_t missing_count = 0;
  auto note = [&](const std::string& id) {
    ++missing_count;
    if (missing_count <= 16) {
      if (!missing.empty()) missing += ", ";
      missing += id;
    }
  };
  for (const Trial& t : trials) {
    if (store.find(t.test_id) == nullptr) note(t.test_id);
    for (const std::string& id : t.enroll_ids)
      if (store.find(id) == nullptr) note(id);
  }
  if (missing_count > 0)
    throw ContractViolation(
        "training aborted: " + std::to_string(missing_count) +
        " trial utterance(s) missing from store: " + missing);
}

// Batch-statistics accumulator for the normalization layers; folded into the
// running estimates after the optimizer step.
struct BnAccum {
  bool active = false;
  Vector sum_cm1, sq_cm1, sum_cm2, sq_cm2;
  Vector sum_asv, sq_asv, sum_post, sq_post;
  std::size_t count = 0;

  explicit BnAccum(const FusionModel& model) {
    active = model.cfg.use_batchnorm;
    if (!active) return;
    sum_cm1 = Vector(model.cfg.hidden_cm);
    sq_cm1 = Vector(model.cfg.hidden_cm);
    sum_cm2 = Vector(model.cfg.hidden_cm);
    sq_cm2 = Vector(model.cfg.hidden_cm);
    if (model.cfg.strategy != Strategy::ScoreFusion) {
      sum_asv = Vector(model.cfg.hidden_asv);
      sq_asv = Vector(model.cfg.hidden_asv);
      sum_post = Vector(model.cfg.hidden_post);
      sq_post = Vector(model.cfg.hidden_post);
    }
  }

  static void add_site(Vector& sum, Vector& sq, const Vector& z) {
    for (std::size_t i = 0; i < z.dim(); ++i) {
      sum[i] += z[i];
      sq[i] += z[i] * z[i];
    }
  }

  void add(const ForwardTrace& t) {
    if (!active) return;
    add_site(sum_cm1, sq_cm1, t.cm_z1);
    add_site(sum_cm2, sq_cm2, t.cm_z2);
    if (t.strategy != Strategy::ScoreFusion) {
      add_site(sum_asv, sq_asv, t.asv_z);
      add_site(sum_post, sq_post, t.post_z);
    }
    ++count;
  }

  static void fold_site(BatchNormLayer& bn, const Vector& sum,
                        const Vector& sq, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < sum.dim(); ++i) {
      const double mean = sum[i] * inv;
      const double var = std::max(0.0, sq[i] * inv - mean * mean);
      bn.running_mean[i] =
          kBnMomentum * bn.running_mean[i] + (1.0 - kBnMomentum) * mean;
      bn.running_var[i] =
          kBnMomentum * bn.running_var[i] + (1.0 - kBnMomentum) * var;
    }
  }

  void fold_into(FusionModel& model,
                 const std::set<ParamGroupTag>& frozen) const {
    if (!active || count == 0) return;
    if (frozen.count(ParamGroupTag::CmPath) == 0) {
      fold_site(model.cm_bn1, sum_cm1, sq_cm1, count);
      fold_site(model.cm_bn2, sum_cm2, sq_cm2, count);
    }
    if (model.cfg.strategy != Strategy::ScoreFusion) {
      if (frozen.count(ParamGroupTag::AsvPath) == 0)
        fold_site(model.asv_bn, sum_asv, sq_asv, count);
      fold_site(model.post_bn, sum_post, sq_post, count);
    }
    ++model.revision;
  }
};

// Forward/backward over one minibatch, mean gradient, one optimizer step.
// Returns the summed loss over the batch.
double run_batch(FusionModel& model, const std::vector<Trial>& trials,
                 std::size_t begin, std::size_t end,
                 const EmbeddingStore& store, const LossConfig& loss_cfg,
                 OptimizerState& opt, const std::set<ParamGroupTag>& frozen,
                 std::uint64_t dropout_step) {
  Gradients acc = zero_gradients(model);
  BnAccum bn(model);
  double loss_sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const Trial& trial = trials[i];
    const TrialInput input = make_trial_input(store, trial);
    const ForwardTrace trace =
        forward(model, input, Mode::Train, DropoutKey{dropout_step, i});
    const TotalLoss tl = total_loss(trace, labels_of(trial), loss_cfg);
    loss_sum += tl.loss;
    Gradients g = backward(model, trace, tl.d_sasv_logit, tl.d_cm_logit);
    acc.accumulate(g);
    bn.add(trace);
  }
  acc.scale(1.0 / static_cast<double>(end - begin));
  opt.apply_update(model, acc, frozen);
  bn.fold_into(model, frozen);
  return loss_sum;
}

}  // namespace

std::vector<AtmmStep> atmm_round(FusionModel& model,
                                 const AtmmDatasets& datasets,
                                 const EmbeddingStore& store,
                                 const AtmmConfig& cfg, OptimizerState& opt,
                                 std::size_t first_step) {
  cfg.validate();
  datasets.validate();
  check_trials_resolvable(store, datasets.cm_dataset);
  check_trials_resolvable(store, datasets.asv_dataset);

  std::vector<AtmmStep> steps;
  steps.reserve(cfg.iters_per_round);
  for (std::size_t iter = 0; iter < cfg.iters_per_round; ++iter) {
    const std::uint64_t step = first_step + iter;
    Rng p_rng = make_rng(cfg.seed, 0xa110, step);
    const int p = static_cast<int>(uniform_index(p_rng, 2));

    AtmmStep record;
    record.p = p;
    record.lambda_used = p == 0 ? cfg.lambda_cm_focus : cfg.lambda_asv_focus;
    record.frozen_group =
        p == 0 ? ParamGroupTag::AsvPath : ParamGroupTag::CmPath;
    const std::vector<Trial>& dataset =
        p == 0 ? datasets.cm_dataset : datasets.asv_dataset;
    record.batch = sample_fraction(dataset, cfg.sample_fraction, cfg.seed, step);

    for (int g = 0; g < 3; ++g)
      record.digest_pre[g] = model.group_digest(static_cast<ParamGroupTag>(g));

    const std::set<ParamGroupTag> frozen = {record.frozen_group};
    const LossConfig loss_cfg{record.lambda_used};
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < record.batch.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(begin + cfg.batch_size, record.batch.size());
      loss_sum += run_batch(model, record.batch, begin, end, store, loss_cfg,
                            opt, frozen, step);
    }
    record.mean_loss = loss_sum / static_cast<double>(record.batch.size());

    for (int g = 0; g < 3; ++g)
      record.digest_post[g] =
          model.group_digest(static_cast<ParamGroupTag>(g));
    steps.push_back(std::move(record));
  }
  return steps;
}

std::vector<AtmmStep> train_atmm(FusionModel& model,
                                 const AtmmDatasets& datasets,
                                 const EmbeddingStore& store,
                                 const AtmmConfig& cfg, OptimizerState& opt) {
  std::vector<AtmmStep> all;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::vector<AtmmStep> steps = atmm_round(model, datasets, store, cfg, opt,
                                             round * cfg.iters_per_round);
    for (AtmmStep& s : steps) all.push_back(std::move(s));
  }
  return all;
}

std::vector<EpochReport> train_conventional(
    FusionModel& model, const std::vector<Trial>& trials,
    const EmbeddingStore& store, std::size_t epochs, std::size_t batch_size,
    OptimizerState& opt, const LossConfig& loss_cfg, std::uint64_t seed) {
  loss_cfg.validate();
  if (trials.empty())
    throw ContractViolation("train_conventional: empty trial list");
  if (batch_size == 0)
    throw ContractViolation("train_conventional: batch_size must be >= 1");
  check_trials_resolvable(store, trials);

  std::vector<EpochReport> reports;
  std::vector<std::size_t> order(trials.size());
  std::vector<Trial> shuffled(trials.size());
  std::uint64_t update = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = make_rng(seed, 0xe90c, epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < order.size(); ++i)
      shuffled[i] = trials[order[i]];

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, shuffled.size());
      loss_sum += run_batch(model, shuffled, begin, end, store, loss_cfg, opt,
                            {}, /*dropout_step=*/update++);
    }
    reports.push_back(
        {epoch, loss_sum / static_cast<double>(shuffled.size())});
  }
  return reports;
}

ScoreSet export_scores(const FusionModel& model,
                       const std::vector<Trial>& trials,
                       const EmbeddingStore& store) {
  ScoreSet scores;
  scores.entries.reserve(trials.size());
  for (const Trial& trial : trials) {
    const TrialInput input = make_trial_input(store, trial);
    const ForwardTrace trace = forward(model, input, Mode::Infer);
    scores.entries.push_back(
        {trial.test_id, trial.label, trace.sasv_score, trace.cm_score});
  }
  return scores;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_atmm_report_tsv(const std::vector<AtmmStep>& steps,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step\tp\tlambda\tmean_loss\tfrozen\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const AtmmStep& s = steps[i];
    out << i << '\t' << s.p << '\t' << format_double(s.lambda_used) << '\t'
        << format_double(s.mean_loss) << '\t' << to_string(s.frozen_group)
        << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

void write_conventional_report_tsv(const std::vector<EpochReport>& epochs,
                                   double lambda, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step\tp\tlambda\tmean_loss\tfrozen\n";
  for (const EpochReport& e : epochs) {
    out << e.epoch << "\t-\t" << format_double(lambda) << '\t'
        << format_double(e.mean_loss) << "\t-\n";
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace saga
