#include "saga/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "saga/errors.hpp"
#include "saga/rng.hpp"

namespace saga {

std::size_t ScoreSet::count(TrialLabel label) const {
  std::size_t n = 0;
  for (const ScoreEntry& e : entries)
    if (e.label == label) ++n;
  return n;
}

namespace {

struct SplitScores {
  std::vector<double> targets;
  std::vector<double> nontargets;
  std::vector<double> spoofs;
};

SplitScores split_sorted(const ScoreSet& scores) {
  SplitScores s;
  for (const ScoreEntry& e : scores.entries) {
    switch (e.label) {
      case TrialLabel::Target: s.targets.push_back(e.sasv_score); break;
      case TrialLabel::NonTarget: s.nontargets.push_back(e.sasv_score); break;
      case TrialLabel::Spoof: s.spoofs.push_back(e.sasv_score); break;
    }
  }
  std::sort(s.targets.begin(), s.targets.end());
  std::sort(s.nontargets.begin(), s.nontargets.end());
  std::sort(s.spoofs.begin(), s.spoofs.end());
  return s;
}

// Fraction of sorted scores <= t.
double frac_at_or_below(const std::vector<double>& sorted, double t) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(it - sorted.begin()) /
         static_cast<double>(sorted.size());
}

// Fraction of sorted scores > t.
double frac_above(const std::vector<double>& sorted, double t) {
  return 1.0 - frac_at_or_below(sorted, t);
}

// Midpoints between consecutive distinct scores plus sentinels below and
// above everything, so the rate step functions are sampled exhaustively.
std::vector<double> candidate_thresholds(std::vector<double> all) {
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> t;
  t.reserve(all.size() + 1);
  t.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    t.push_back(all[i] + (all[i + 1] - all[i]) / 2.0);
  t.push_back(all.back() + 1.0);
  return t;
}

}  // namespace

ErrorRates error_rates_at(const ScoreSet& scores, double threshold) {
  const SplitScores s = split_sorted(scores);
  if (s.targets.empty() || s.nontargets.empty() || s.spoofs.empty())
    throw ContractViolation(
        "error_rates_at: every class must have at least one trial");
  ErrorRates r;
  r.threshold = threshold;
  r.p_miss = frac_at_or_below(s.targets, threshold);
  r.p_fa_non = frac_above(s.nontargets, threshold);
  r.p_fa_spf = frac_above(s.spoofs, threshold);
  return r;
}

EerResult sasv_eer(const ScoreSet& scores) {
  SplitScores s = split_sorted(scores);
  std::vector<double> impostors;
  impostors.reserve(s.nontargets.size() + s.spoofs.size());
  impostors.insert(impostors.end(), s.nontargets.begin(), s.nontargets.end());
  impostors.insert(impostors.end(), s.spoofs.begin(), s.spoofs.end());
  std::sort(impostors.begin(), impostors.end());
  if (s.targets.empty() || impostors.empty())
    throw ContractViolation("sasv_eer: need targets and pooled impostors");

  std::vector<double> all;
  all.reserve(s.targets.size() + impostors.size());
  all.insert(all.end(), s.targets.begin(), s.targets.end());
  all.insert(all.end(), impostors.begin(), impostors.end());
  const std::vector<double> thresholds = candidate_thresholds(std::move(all));

  double prev_frr = 0.0, prev_far = 1.0, prev_t = thresholds.front();
  for (double t : thresholds) {
    const double frr = frac_at_or_below(s.targets, t);
    const double far = frac_above(impostors, t);
    if (frr >= far) {
      if (frr == far) return {frr, t};
      // Linear interpolation between the bracketing sweep points.
      const double denom = (frr - prev_frr) - (far - prev_far);
      const double alpha = denom != 0.0 ? (prev_far - prev_frr) / denom : 0.0;
      const double eer = prev_frr + alpha * (frr - prev_frr);
      const double threshold = prev_t + alpha * (t - prev_t);
      return {eer, threshold};
    }
    prev_frr = frr;
    prev_far = far;
    prev_t = t;
  }
  // FRR never reached FAR: degenerate, report the final point.
  return {prev_frr, prev_t};
}

void ADcfConfig::validate() const {
  if (pi_tar <= 0.0 || pi_non <= 0.0 || pi_spf <= 0.0)
    throw ContractViolation("a-dcf config: priors must be positive");
  if (std::fabs(pi_tar + pi_non + pi_spf - 1.0) > 1e-12)
    throw ContractViolation("a-dcf config: priors must sum to 1");
  if (c_miss <= 0.0 || c_fa_non <= 0.0 || c_fa_spf <= 0.0)
    throw ContractViolation("a-dcf config: costs must be positive");
}

ADcfResult min_adcf(const ScoreSet& scores, const ADcfConfig& cfg) {
  cfg.validate();
  const SplitScores s = split_sorted(scores);
  if (s.targets.empty() || s.nontargets.empty() || s.spoofs.empty())
    throw ContractViolation("min_adcf: every class must be non-empty");

  std::vector<double> all;
  all.reserve(s.targets.size() + s.nontargets.size() + s.spoofs.size());
  all.insert(all.end(), s.targets.begin(), s.targets.end());
  all.insert(all.end(), s.nontargets.begin(), s.nontargets.end());
  all.insert(all.end(), s.spoofs.begin(), s.spoofs.end());
  const std::vector<double> thresholds = candidate_thresholds(std::move(all));

  const double denom = std::min(cfg.c_miss * cfg.pi_tar,
                                cfg.c_fa_non * cfg.pi_non +
                                    cfg.c_fa_spf * cfg.pi_spf);
  ADcfResult best;
  bool first = true;
  for (double t : thresholds) {
    const double cost = cfg.c_miss * cfg.pi_tar * frac_at_or_below(s.targets, t) +
                        cfg.c_fa_non * cfg.pi_non * frac_above(s.nontargets, t) +
                        cfg.c_fa_spf * cfg.pi_spf * frac_above(s.spoofs, t);
    const double value = cost / denom;
    if (first || value < best.value) {
      best.value = value;
      best.threshold = t;
      first = false;
    }
  }
  return best;
}

namespace {

double metric_value(const ScoreSet& scores, MetricKind metric,
                    const ADcfConfig& cfg) {
  switch (metric) {
    case MetricKind::SasvEer: return sasv_eer(scores).eer;
    case MetricKind::MinADcf: return min_adcf(scores, cfg).value;
  }
  throw ContractViolation("unknown metric kind");
}

double percentile(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

CiResult bootstrap_ci(const ScoreSet& scores, MetricKind metric,
                      const ADcfConfig& adcf_cfg, std::size_t replicates,
                      double level, std::uint64_t seed) {
  if (replicates == 0)
    throw ContractViolation("bootstrap_ci: need at least one replicate");
  if (!(level > 0.0 && level < 1.0))
    throw ContractViolation("bootstrap_ci: level must be in (0, 1)");

  std::vector<std::size_t> by_class[3];
  for (std::size_t i = 0; i < scores.entries.size(); ++i)
    by_class[static_cast<std::size_t>(scores.entries[i].label)].push_back(i);

  CiResult result;
  result.point = metric_value(scores, metric, adcf_cfg);
  result.replicates = replicates;
  result.level = level;

  std::vector<double> values(replicates);
  ScoreSet resampled;
  resampled.entries.resize(scores.entries.size());
  for (std::size_t r = 0; r < replicates; ++r) {
    Rng rng = make_rng(seed, 0xb007, r);
    std::size_t pos = 0;
    // Stratified: each class re-drawn with replacement at its own count.
    for (const auto& cls : by_class) {
      for (std::size_t i = 0; i < cls.size(); ++i) {
        resampled.entries[pos++] =
            scores.entries[cls[uniform_index(rng, cls.size())]];
      }
    }
    values[r] = metric_value(resampled, metric, adcf_cfg);
  }
  std::sort(values.begin(), values.end());
  const double alpha = (1.0 - level) / 2.0;
  result.lower = percentile(values, alpha);
  result.upper = percentile(values, 1.0 - alpha);
  return result;
}

Histogram histogram(const ScoreSet& scores, TrialLabel label,
                    std::size_t bins) {
  if (bins == 0) throw ContractViolation("histogram: bins must be >= 1");
  Histogram h;
  h.density.assign(bins, 0.0);
  std::size_t n = 0;
  for (const ScoreEntry& e : scores.entries) {
    if (e.label != label) continue;
    double s = std::min(1.0, std::max(0.0, e.sasv_score));
    std::size_t idx = static_cast<std::size_t>(
        std::floor(s * static_cast<double>(bins)));
    if (idx >= bins) idx = bins - 1;
    h.density[idx] += 1.0;
    ++n;
  }
  if (n == 0) {
    h.empty_class = true;
    return h;
  }
  const double width = 1.0 / static_cast<double>(bins);
  for (double& d : h.density) d /= static_cast<double>(n) * width;
  return h;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size())
      throw ParseError(ParseFault::Malformed, lineno,
                       "trailing junk in number " + s);
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError(ParseFault::Malformed, lineno, "not a number: " + s);
  } catch (const std::out_of_range&) {
    throw ParseError(ParseFault::Malformed, lineno, "number out of range: " + s);
  }
}

}  // namespace

void write_scores_tsv(const ScoreSet& scores, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const ScoreEntry& e : scores.entries) {
    out << e.test_id << '\t' << to_string(e.label) << '\t'
        << format_double(e.sasv_score) << '\t' << format_double(e.cm_score)
        << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

ScoreSet read_scores_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  ScoreSet scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, label, sasv, cm;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, sasv, '\t') || !std::getline(ss, cm))
      throw ParseError(ParseFault::Malformed, lineno,
                       "score line needs 4 tab-separated fields");
    ScoreEntry e;
    e.test_id = std::move(id);
    try {
      e.label = trial_label_from_string(label);
    } catch (const ContractViolation& err) {
      throw ParseError(ParseFault::Malformed, lineno, err.what());
    }
    e.sasv_score = parse_double(sasv, lineno);
    e.cm_score = parse_double(cm, lineno);
    scores.entries.push_back(std::move(e));
  }
  return scores;
}

void write_metric_report_tsv(const ScoreSet& scores, const ADcfConfig& cfg,
                             std::size_t replicates, double level,
                             std::uint64_t seed, const std::string& path) {
  const EerResult eer = sasv_eer(scores);
  const ADcfResult adcf = min_adcf(scores, cfg);
  const CiResult eer_ci = bootstrap_ci(scores, MetricKind::SasvEer, cfg,
                                       replicates, level, seed);
  const CiResult adcf_ci = bootstrap_ci(scores, MetricKind::MinADcf, cfg,
                                        replicates, level, seed);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "metric\tpoint\tci_lower\tci_upper\tthreshold\n";
  out << "sasv_eer\t" << format_double(eer.eer) << '\t'
      << format_double(eer_ci.lower) << '\t' << format_double(eer_ci.upper)
      << '\t' << format_double(eer.threshold) << '\n';
  out << "min_adcf\t" << format_double(adcf.value) << '\t'
      << format_double(adcf_ci.lower) << '\t' << format_double(adcf_ci.upper)
      << '\t' << format_double(adcf.threshold) << '\n';
  if (!out) throw IoError("short write to " + path);
}

void write_histogram_csv(const ScoreSet& scores, std::size_t bins,
                         const std::string& path) {
  const Histogram target = histogram(scores, TrialLabel::Target, bins);
  const Histogram nontarget = histogram(scores, TrialLabel::NonTarget, bins);
  const Histogram spoof = histogram(scores, TrialLabel::Spoof, bins);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "bin_left,bin_right,target,nontarget,spoof\n";
  if (target.empty_class) out << "# class target: empty\n";
  if (nontarget.empty_class) out << "# class nontarget: empty\n";
  if (spoof.empty_class) out << "# class spoof: empty\n";
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out << format_double(static_cast<double>(i) * width) << ','
        << format_double(static_cast<double>(i + 1) * width) << ','
        << format_double(target.density[i]) << ','
        << format_double(nontarget.density[i]) << ','
        << format_double(spoof.density[i]) << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace saga
