#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "saga/config.hpp"
#include "saga/errors.hpp"
#include "saga/rng.hpp"
#include "saga/store.hpp"
#include "saga/training.hpp"
#include "saga/trials.hpp"

using namespace saga;

namespace {

ModelConfig small_model_config(Strategy s = Strategy::EarlyGate) {
  ModelConfig cfg;
  cfg.strategy = s;
  cfg.asv_dim = 8;
  cfg.cm_dim = 6;
  cfg.seed = 13;
  return cfg;
}

// Small synthetic world shared by the training tests.
struct World {
  EmbeddingStore store;
  std::vector<Trial> cm_trials;
  std::vector<Trial> asv_trials;

  explicit World(std::uint64_t seed = 5) {
    SynthConfig g;
    g.n_speakers = 8;
    g.utts_per_speaker = 6;
    g.spoofs_per_speaker = 6;
    g.asv_dim = 8;
    g.cm_dim = 6;
    g.seed = seed;
    store = generate(g);
    TrialQuotas q;
    q.per_utt_targets = 2;
    q.per_utt_nontargets = 2;
    q.per_utt_spoofs = 2;
    cm_trials = build_cm_trials(store.metadata(), q, seed + 1);
    asv_trials = build_asv_trials(store.metadata(), q, seed + 2);
  }

  std::vector<Trial> merged() const {
    std::vector<Trial> all = cm_trials;
    all.insert(all.end(), asv_trials.begin(), asv_trials.end());
    return all;
  }
};

ForwardTrace trace_with_logits(double sasv_logit, double cm_logit) {
  ForwardTrace t;
  t.sasv_logit = sasv_logit;
  t.sasv_score = sigmoid(sasv_logit);
  t.cm_logit = cm_logit;
  t.cm_score = sigmoid(cm_logit);
  return t;
}

}  // namespace

TEST_CASE("total_loss") {
  SUBCASE("lambda 1 drops the CM term") {
    const ForwardTrace t = trace_with_logits(0.3, -1.2);
    const TotalLoss out = total_loss(t, {1, 0}, LossConfig{1.0});
    CHECK(out.loss == doctest::Approx(bce_loss(0.3, 1)).epsilon(1e-15));
    CHECK(out.d_cm_logit == 0.0);
  }
  SUBCASE("lambda 0 drops the SASV term") {
    const ForwardTrace t = trace_with_logits(0.3, -1.2);
    const TotalLoss out = total_loss(t, {1, 0}, LossConfig{0.0});
    CHECK(out.loss == doctest::Approx(bce_loss(-1.2, 0)).epsilon(1e-15));
    CHECK(out.d_sasv_logit == 0.0);
  }
  SUBCASE("balanced weights with zero logits give ln 2") {
    const ForwardTrace t = trace_with_logits(0.0, 0.0);
    const TotalLoss out = total_loss(t, {1, 1}, LossConfig{0.5});
    CHECK(out.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("confident correct predictions cost almost nothing") {
    const ForwardTrace t = trace_with_logits(50.0, -50.0);
    const TotalLoss out = total_loss(t, {1, 0}, LossConfig{0.5});
    CHECK(out.loss == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("logit gradients match finite differences to 1e-6") {
    Rng rng = make_rng(77);
    for (int i = 0; i < 50; ++i) {
      const double ls = gaussian(rng) * 3.0;
      const double lc = gaussian(rng) * 3.0;
      const double lambda = uniform_unit(rng);
      const TrialLabels y{static_cast<int>(uniform_index(rng, 2)),
                          static_cast<int>(uniform_index(rng, 2))};
      const LossConfig cfg{lambda};
      const double h = 1e-6;
      const TotalLoss base = total_loss(trace_with_logits(ls, lc), y, cfg);
      const double num_s =
          (total_loss(trace_with_logits(ls + h, lc), y, cfg).loss -
           total_loss(trace_with_logits(ls - h, lc), y, cfg).loss) /
          (2 * h);
      const double num_c =
          (total_loss(trace_with_logits(ls, lc + h), y, cfg).loss -
           total_loss(trace_with_logits(ls, lc - h), y, cfg).loss) /
          (2 * h);
      CHECK(base.d_sasv_logit ==
            doctest::Approx(num_s).epsilon(1e-6).scale(1.0));
      CHECK(base.d_cm_logit ==
            doctest::Approx(num_c).epsilon(1e-6).scale(1.0));
    }
  }
  SUBCASE("lambda outside [0,1] is rejected") {
    const ForwardTrace t = trace_with_logits(0.0, 0.0);
    CHECK_THROWS_AS(total_loss(t, {1, 1}, LossConfig{1.5}), ContractViolation);
  }
}

TEST_CASE("apply_update freeze semantics") {
  FusionModel model = build_model(small_model_config());
  OptimizerState opt(OptimizerConfig{}, model);

  // Nonzero gradient everywhere.
  Gradients grads = zero_gradients(model);
  for (ParamBlock& b : grads.blocks())
    for (double& v : b.values) v = 0.01;

  SUBCASE("frozen group stays bitwise unchanged, others move") {
    const std::uint64_t asv_before = model.group_digest(ParamGroupTag::AsvPath);
    const std::uint64_t cm_before = model.group_digest(ParamGroupTag::CmPath);
    const std::uint64_t joint_before = model.group_digest(ParamGroupTag::Joint);
    opt.apply_update(model, grads, {ParamGroupTag::AsvPath});
    CHECK(model.group_digest(ParamGroupTag::AsvPath) == asv_before);
    CHECK(model.group_digest(ParamGroupTag::CmPath) != cm_before);
    CHECK(model.group_digest(ParamGroupTag::Joint) != joint_before);
  }

  SUBCASE("frozen moments do not advance") {
    // Freeze ASV for one step, then update everything: if the frozen step had
    // advanced the ASV moments, this run would differ from a fresh one that
    // never saw the frozen step.
    FusionModel twin = model;
    OptimizerState twin_opt(OptimizerConfig{}, twin);

    opt.apply_update(model, grads, {ParamGroupTag::AsvPath});
    opt.apply_update(model, grads, {});

    // Twin: replay the same CM/Joint history, but ASV only sees one step.
    Gradients twin_grads = zero_gradients(twin);
    for (ParamBlock& b : twin_grads.blocks())
      for (double& v : b.values) v = 0.01;
    twin_opt.apply_update(twin, twin_grads, {ParamGroupTag::AsvPath});
    twin_opt.apply_update(twin, twin_grads, {});
    CHECK(model.group_digest(ParamGroupTag::AsvPath) ==
          twin.group_digest(ParamGroupTag::AsvPath));
  }

  SUBCASE("zero gradients leave the model unchanged") {
    Gradients zeros = zero_gradients(model);
    const std::vector<double> before = flatten_parameters(model);
    opt.apply_update(model, zeros, {});
    CHECK(flatten_parameters(model) == before);
  }

  SUBCASE("identical calls from identical state give identical parameters") {
    FusionModel m1 = build_model(small_model_config());
    FusionModel m2 = build_model(small_model_config());
    OptimizerState o1(OptimizerConfig{}, m1);
    OptimizerState o2(OptimizerConfig{}, m2);
    Gradients g1 = zero_gradients(m1);
    Gradients g2 = zero_gradients(m2);
    for (ParamBlock& b : g1.blocks())
      for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = 0.02;
    for (ParamBlock& b : g2.blocks())
      for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = 0.02;
    o1.apply_update(m1, g1, {});
    o2.apply_update(m2, g2, {});
    CHECK(flatten_parameters(m1) == flatten_parameters(m2));
  }

  SUBCASE("freezing the joint group is a contract violation") {
    CHECK_THROWS_AS(opt.apply_update(model, grads, {ParamGroupTag::Joint}),
                    ContractViolation);
  }

  SUBCASE("sgd applies the plain rule") {
    FusionModel m = build_model(small_model_config());
    OptimizerConfig sgd;
    sgd.kind = OptimizerKind::Sgd;
    sgd.learning_rate = 0.5;
    OptimizerState o(sgd, m);
    const std::vector<double> before = flatten_parameters(m);
    Gradients g = zero_gradients(m);
    auto blocks = g.blocks();
    blocks[0].values[0] = 2.0;
    o.apply_update(m, g, {});
    const std::vector<double> after = flatten_parameters(m);
    CHECK(after[0] == doctest::Approx(before[0] - 1.0).epsilon(1e-15));
    CHECK(after[1] == before[1]);
  }
}

TEST_CASE("atmm_round honors the algorithm contract") {
  World world;
  FusionModel model = build_model(small_model_config());
  OptimizerState opt(OptimizerConfig{}, model);
  AtmmConfig cfg;
  cfg.iters_per_round = 40;
  cfg.sample_fraction = 0.05;
  cfg.seed = 99;
  const AtmmDatasets datasets{world.cm_trials, world.asv_trials};

  const std::vector<AtmmStep> steps =
      atmm_round(model, datasets, world.store, cfg, opt);
  REQUIRE(steps.size() == cfg.iters_per_round);

  std::set<std::string> cm_keys, asv_keys;
  for (const Trial& t : world.cm_trials)
    cm_keys.insert(t.test_id + "|" + t.enroll_ids.front());
  for (const Trial& t : world.asv_trials)
    asv_keys.insert(t.test_id + "|" + t.enroll_ids.front());

  bool saw_p0 = false, saw_p1 = false;
  for (const AtmmStep& s : steps) {
    if (s.p == 0) {
      saw_p0 = true;
      CHECK(s.lambda_used == cfg.lambda_cm_focus);
      CHECK(s.frozen_group == ParamGroupTag::AsvPath);
      // Frozen group is bitwise unchanged across the iteration.
      CHECK(s.digest_pre[1] == s.digest_post[1]);
      for (const Trial& t : s.batch)
        CHECK(cm_keys.count(t.test_id + "|" + t.enroll_ids.front()) == 1);
    } else {
      saw_p1 = true;
      CHECK(s.lambda_used == cfg.lambda_asv_focus);
      CHECK(s.frozen_group == ParamGroupTag::CmPath);
      CHECK(s.digest_pre[0] == s.digest_post[0]);
      for (const Trial& t : s.batch) {
        CHECK(t.label != TrialLabel::Spoof);
        CHECK(asv_keys.count(t.test_id + "|" + t.enroll_ids.front()) == 1);
      }
    }
    CHECK(std::fabs(s.mean_loss) < 50.0);
  }
  CHECK(saw_p0);
  CHECK(saw_p1);

  SUBCASE("deterministic in seeds") {
    FusionModel m1 = build_model(small_model_config());
    FusionModel m2 = build_model(small_model_config());
    OptimizerState o1(OptimizerConfig{}, m1);
    OptimizerState o2(OptimizerConfig{}, m2);
    atmm_round(m1, datasets, world.store, cfg, o1);
    atmm_round(m2, datasets, world.store, cfg, o2);
    CHECK(flatten_parameters(m1) == flatten_parameters(m2));
  }

  SUBCASE("spoofs in the asv dataset are rejected") {
    AtmmDatasets bad{world.cm_trials, world.cm_trials};
    FusionModel m = build_model(small_model_config());
    OptimizerState o(OptimizerConfig{}, m);
    CHECK_THROWS_AS(atmm_round(m, bad, world.store, cfg, o),
                    ContractViolation);
  }

  SUBCASE("tiny dataset still samples one trial per iteration") {
    AtmmDatasets tiny{{world.cm_trials[0]}, {world.asv_trials[0]}};
    AtmmConfig tiny_cfg = cfg;
    tiny_cfg.iters_per_round = 4;
    tiny_cfg.sample_fraction = 0.001;
    FusionModel m = build_model(small_model_config());
    OptimizerState o(OptimizerConfig{}, m);
    const std::vector<AtmmStep> tiny_steps =
        atmm_round(m, tiny, world.store, tiny_cfg, o);
    for (const AtmmStep& s : tiny_steps) CHECK(s.batch.size() == 1);
  }
}

TEST_CASE("train_conventional") {
  World world;
  const std::vector<Trial> merged = world.merged();

  SUBCASE("loss decreases on separable synthetic data") {
    FusionModel model = build_model(small_model_config());
    OptimizerState opt(OptimizerConfig{}, model);
    const std::vector<EpochReport> report = train_conventional(
        model, merged, world.store, 12, 64, opt, LossConfig{0.5}, 3);
    REQUIRE(report.size() == 12);
    CHECK(report.back().mean_loss < report.front().mean_loss);
  }

  SUBCASE("zero epochs is a no-op") {
    FusionModel model = build_model(small_model_config());
    OptimizerState opt(OptimizerConfig{}, model);
    const std::vector<double> before = flatten_parameters(model);
    const std::vector<EpochReport> report = train_conventional(
        model, merged, world.store, 0, 64, opt, LossConfig{0.5}, 3);
    CHECK(report.empty());
    CHECK(flatten_parameters(model) == before);
  }

  SUBCASE("same seed twice gives identical parameters and reports") {
    FusionModel m1 = build_model(small_model_config());
    FusionModel m2 = build_model(small_model_config());
    OptimizerState o1(OptimizerConfig{}, m1);
    OptimizerState o2(OptimizerConfig{}, m2);
    const auto r1 = train_conventional(m1, merged, world.store, 3, 32, o1,
                                       LossConfig{0.5}, 11);
    const auto r2 = train_conventional(m2, merged, world.store, 3, 32, o2,
                                       LossConfig{0.5}, 11);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i)
      CHECK(r1[i].mean_loss == r2[i].mean_loss);
    CHECK(flatten_parameters(m1) == flatten_parameters(m2));
  }

  SUBCASE("missing utterances are listed before training starts") {
    FusionModel model = build_model(small_model_config());
    OptimizerState opt(OptimizerConfig{}, model);
    std::vector<Trial> broken = merged;
    broken.push_back({{"ghost-1"}, "ghost-2", TrialLabel::Target});
    const std::vector<double> before = flatten_parameters(model);
    try {
      train_conventional(model, broken, world.store, 2, 32, opt,
                         LossConfig{0.5}, 3);
      FAIL("expected ContractViolation");
    } catch (const ContractViolation& e) {
      const std::string msg = e.what();
      CHECK(msg.find("ghost-1") != std::string::npos);
      CHECK(msg.find("ghost-2") != std::string::npos);
    }
    CHECK(flatten_parameters(model) == before);  // aborted before updates
  }
}

TEST_CASE("export_scores") {
  World world;
  FusionModel model = build_model(small_model_config());

  SUBCASE("empty trial list gives an empty score set") {
    CHECK(export_scores(model, {}, world.store).entries.empty());
  }
  SUBCASE("scores are in (0,1) and deterministic") {
    const ScoreSet a = export_scores(model, world.cm_trials, world.store);
    const ScoreSet b = export_scores(model, world.cm_trials, world.store);
    REQUIRE(a.entries.size() == world.cm_trials.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      CHECK(a.entries[i].sasv_score > 0.0);
      CHECK(a.entries[i].sasv_score < 1.0);
      CHECK(a.entries[i].cm_score > 0.0);
      CHECK(a.entries[i].cm_score < 1.0);
      CHECK(a.entries[i].sasv_score == b.entries[i].sasv_score);
      CHECK(a.entries[i].test_id == world.cm_trials[i].test_id);
    }
  }
  SUBCASE("missing utterance names the trial") {
    const std::vector<Trial> bad = {{{"nope"}, "missing-utt",
                                     TrialLabel::Target}};
    try {
      export_scores(model, bad, world.store);
      FAIL("expected ContractViolation");
    } catch (const ContractViolation& e) {
      CHECK(std::string(e.what()).find("missing-utt") != std::string::npos);
    }
  }
}

TEST_CASE("make_trial_input aggregates enrollment embeddings by mean") {
  World world;
  // Find a target trial with more than one enrollment utterance.
  const Trial* multi = nullptr;
  for (const Trial& t : world.cm_trials)
    if (t.enroll_ids.size() > 1) {
      multi = &t;
      break;
    }
  REQUIRE(multi != nullptr);
  const TrialInput in = make_trial_input(world.store, *multi);
  Vector want(world.store.asv_dim(), 0.0);
  for (const std::string& id : multi->enroll_ids)
    axpy(want, 1.0, world.store.require(id).asv_embedding);
  for (std::size_t i = 0; i < want.dim(); ++i)
    want[i] /= static_cast<double>(multi->enroll_ids.size());
  for (std::size_t i = 0; i < want.dim(); ++i)
    CHECK(in.enroll_asv[i] == doctest::Approx(want[i]).epsilon(1e-15));
  CHECK(in.test_asv == world.store.require(multi->test_id).asv_embedding);
}
