#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "saga/config.hpp"
#include "saga/errors.hpp"

using namespace saga;
namespace fs = std::filesystem;

namespace {

fs::path write_cfg(const std::string& body) {
  const fs::path p = fs::temp_directory_path() / "saga_test_run.cfg";
  std::ofstream out(p, std::ios::trunc);
  out << body;
  return p;
}

}  // namespace

TEST_CASE("run config defaults are desk-scale") {
  const RunConfig cfg;
  CHECK(cfg.gen.n_speakers == 50);
  CHECK(cfg.gen.asv_dim == 32);
  CHECK(cfg.gen.cm_dim == 16);
  CHECK(cfg.model.strategy == Strategy::EarlyGate);
  CHECK(cfg.atmm.rounds == 5);
  CHECK(cfg.atmm.iters_per_round == 100);
  CHECK(cfg.atmm.sample_fraction == 0.01);
  CHECK(cfg.atmm.lambda_cm_focus == 0.1);
  CHECK(cfg.atmm.lambda_asv_focus == 0.9);
  CHECK(cfg.lambda == 0.5);
  CHECK(cfg.optimizer.kind == OptimizerKind::Adam);
  CHECK(cfg.optimizer.learning_rate == 1e-3);
  CHECK(cfg.eval_replicates == 1000);
  CHECK(cfg.eval_level == 0.95);
  CHECK(cfg.adcf.pi_tar == 0.9405);
  CHECK(cfg.adcf.pi_non == 0.0095);
  CHECK(cfg.adcf.pi_spf == 0.05);
  CHECK(cfg.adcf.c_miss == 1.0);
  CHECK(cfg.adcf.c_fa_non == 10.0);
  CHECK(cfg.adcf.c_fa_spf == 10.0);
}

TEST_CASE("config file parsing") {
  const fs::path p = write_cfg(
      "# comment line\n"
      "gen.n_speakers = 12\n"
      "model.strategy = s3   # trailing comment\n"
      "model.dropout_rate = 0.25\n"
      "model.use_batchnorm = on\n"
      "train.use_atmm = off\n"
      "atmm.sample_fraction = 0.02\n"
      "opt.kind = sgd\n"
      "opt.learning_rate = 0.01\n"
      "\n"
      "adcf.pi_tar = 0.9\n"
      "adcf.pi_non = 0.05\n"
      "adcf.pi_spf = 0.05\n");
  const RunConfig cfg = load_run_config(p.string());
  CHECK(cfg.gen.n_speakers == 12);
  CHECK(cfg.model.strategy == Strategy::ScoreFusion);
  CHECK(cfg.model.dropout_rate == 0.25);
  CHECK(cfg.model.use_batchnorm);
  CHECK_FALSE(cfg.use_atmm);
  CHECK(cfg.atmm.sample_fraction == 0.02);
  CHECK(cfg.optimizer.kind == OptimizerKind::Sgd);
  CHECK(cfg.optimizer.learning_rate == 0.01);
  CHECK(cfg.adcf.pi_tar == 0.9);
}

TEST_CASE("config errors carry the line number") {
  SUBCASE("unknown key") {
    const fs::path p = write_cfg("gen.n_speakers = 4\nbogus.key = 1\n");
    try {
      load_run_config(p.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 2);
      CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
    }
  }
  SUBCASE("missing equals sign") {
    const fs::path p = write_cfg("gen.n_speakers 4\n");
    CHECK_THROWS_AS(load_run_config(p.string()), ParseError);
  }
  SUBCASE("bad number") {
    const fs::path p = write_cfg("gen.speaker_noise = abc\n");
    CHECK_THROWS_AS(load_run_config(p.string()), ParseError);
  }
  SUBCASE("bad flag") {
    const fs::path p = write_cfg("model.use_batchnorm = maybe\n");
    CHECK_THROWS_AS(load_run_config(p.string()), ParseError);
  }
  SUBCASE("bad strategy") {
    const fs::path p = write_cfg("model.strategy = s9\n");
    CHECK_THROWS_AS(load_run_config(p.string()), ParseError);
  }
  SUBCASE("missing file is an IoError") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/nope.cfg"), IoError);
  }
}
