#include "saga/config.hpp"

#include <fstream>

#include "saga/errors.hpp"

namespace saga {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& v, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size())
      throw ParseError(ParseFault::Malformed, lineno, "bad integer: " + v);
    return out;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    throw ParseError(ParseFault::Malformed, lineno, "bad integer: " + v);
  }
}

std::size_t parse_size(const std::string& v, std::size_t lineno) {
  return static_cast<std::size_t>(parse_u64(v, lineno));
}

double parse_real(const std::string& v, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size())
      throw ParseError(ParseFault::Malformed, lineno, "bad number: " + v);
    return out;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    throw ParseError(ParseFault::Malformed, lineno, "bad number: " + v);
  }
}

bool parse_flag(const std::string& v, std::size_t lineno) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ParseError(ParseFault::Malformed, lineno,
                   "bad flag (want on|off): " + v);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value, std::size_t lineno) {
  // gen.*
  if (key == "gen.n_speakers") { cfg.gen.n_speakers = parse_size(value, lineno); return; }
  if (key == "gen.utts_per_speaker") { cfg.gen.utts_per_speaker = parse_size(value, lineno); return; }
  if (key == "gen.spoofs_per_speaker") { cfg.gen.spoofs_per_speaker = parse_size(value, lineno); return; }
  if (key == "gen.asv_dim") { cfg.gen.asv_dim = parse_size(value, lineno); return; }
  if (key == "gen.cm_dim") { cfg.gen.cm_dim = parse_size(value, lineno); return; }
  if (key == "gen.speaker_noise") { cfg.gen.speaker_noise = parse_real(value, lineno); return; }
  if (key == "gen.spoof_mimicry") { cfg.gen.spoof_mimicry = parse_real(value, lineno); return; }
  if (key == "gen.cm_separation") { cfg.gen.cm_separation = parse_real(value, lineno); return; }
  if (key == "gen.seed") { cfg.gen.seed = parse_u64(value, lineno); return; }
  // model.*
  if (key == "model.strategy") {
    try {
      cfg.model.strategy = strategy_from_string(value);
    } catch (const ContractViolation& e) {
      throw ParseError(ParseFault::Malformed, lineno, e.what());
    }
    return;
  }
  if (key == "model.hidden_cm") { cfg.model.hidden_cm = parse_size(value, lineno); return; }
  if (key == "model.hidden_asv") { cfg.model.hidden_asv = parse_size(value, lineno); return; }
  if (key == "model.hidden_post") { cfg.model.hidden_post = parse_size(value, lineno); return; }
  if (key == "model.use_batchnorm") { cfg.model.use_batchnorm = parse_flag(value, lineno); return; }
  if (key == "model.dropout_rate") { cfg.model.dropout_rate = parse_real(value, lineno); return; }
  if (key == "model.seed") { cfg.model.seed = parse_u64(value, lineno); return; }
  // trials.*
  if (key == "trials.per_utt_targets") { cfg.quotas.per_utt_targets = parse_size(value, lineno); return; }
  if (key == "trials.per_utt_nontargets") { cfg.quotas.per_utt_nontargets = parse_size(value, lineno); return; }
  if (key == "trials.per_utt_spoofs") { cfg.quotas.per_utt_spoofs = parse_size(value, lineno); return; }
  if (key == "trials.enroll_size") { cfg.quotas.enroll_size = parse_size(value, lineno); return; }
  if (key == "trials.eval_quota") { cfg.eval_quota = parse_size(value, lineno); return; }
  if (key == "trials.seed") { cfg.trials_seed = parse_u64(value, lineno); return; }
  // train.*
  if (key == "train.use_atmm") { cfg.use_atmm = parse_flag(value, lineno); return; }
  if (key == "train.epochs") { cfg.epochs = parse_size(value, lineno); return; }
  if (key == "train.batch_size") { cfg.batch_size = parse_size(value, lineno); return; }
  if (key == "train.lambda") { cfg.lambda = parse_real(value, lineno); return; }
  if (key == "train.seed") { cfg.train_seed = parse_u64(value, lineno); return; }
  // atmm.*
  if (key == "atmm.rounds") { cfg.atmm.rounds = parse_size(value, lineno); return; }
  if (key == "atmm.iters_per_round") { cfg.atmm.iters_per_round = parse_size(value, lineno); return; }
  if (key == "atmm.sample_fraction") { cfg.atmm.sample_fraction = parse_real(value, lineno); return; }
  if (key == "atmm.lambda_cm_focus") { cfg.atmm.lambda_cm_focus = parse_real(value, lineno); return; }
  if (key == "atmm.lambda_asv_focus") { cfg.atmm.lambda_asv_focus = parse_real(value, lineno); return; }
  if (key == "atmm.batch_size") { cfg.atmm.batch_size = parse_size(value, lineno); return; }
  if (key == "atmm.seed") { cfg.atmm.seed = parse_u64(value, lineno); return; }
  // opt.*
  if (key == "opt.kind") {
    if (value == "sgd") { cfg.optimizer.kind = OptimizerKind::Sgd; return; }
    if (value == "adam") { cfg.optimizer.kind = OptimizerKind::Adam; return; }
    throw ParseError(ParseFault::Malformed, lineno,
                     "bad optimizer kind (want sgd|adam): " + value);
  }
  if (key == "opt.learning_rate") { cfg.optimizer.learning_rate = parse_real(value, lineno); return; }
  if (key == "opt.beta1") { cfg.optimizer.beta1 = parse_real(value, lineno); return; }
  if (key == "opt.beta2") { cfg.optimizer.beta2 = parse_real(value, lineno); return; }
  if (key == "opt.epsilon") { cfg.optimizer.epsilon = parse_real(value, lineno); return; }
  // eval.*
  if (key == "eval.replicates") { cfg.eval_replicates = parse_size(value, lineno); return; }
  if (key == "eval.level") { cfg.eval_level = parse_real(value, lineno); return; }
  if (key == "eval.seed") { cfg.eval_seed = parse_u64(value, lineno); return; }
  if (key == "eval.bins") { cfg.hist_bins = parse_size(value, lineno); return; }
  // adcf.*
  if (key == "adcf.pi_tar") { cfg.adcf.pi_tar = parse_real(value, lineno); return; }
  if (key == "adcf.pi_non") { cfg.adcf.pi_non = parse_real(value, lineno); return; }
  if (key == "adcf.pi_spf") { cfg.adcf.pi_spf = parse_real(value, lineno); return; }
  if (key == "adcf.c_miss") { cfg.adcf.c_miss = parse_real(value, lineno); return; }
  if (key == "adcf.c_fa_non") { cfg.adcf.c_fa_non = parse_real(value, lineno); return; }
  if (key == "adcf.c_fa_spf") { cfg.adcf.c_fa_spf = parse_real(value, lineno); return; }

  throw ParseError(ParseFault::Malformed, lineno, "bad config key: " + key);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(ParseFault::Malformed, lineno,
                       "expected `key = value`, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParseError(ParseFault::Malformed, lineno,
                       "expected `key = value`, got: " + line);
    apply_config_entry(cfg, key, value, lineno);
  }
  return cfg;
}

}  // namespace saga
