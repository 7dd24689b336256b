#include "sealedinfer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/prg.hpp"

namespace sealedinfer {

void LabeledScores::validate() const {
  if (scores.size() != labels.size()) {
    throw MetricError("class '" + class_name + "': " + std::to_string(scores.size()) + " scores but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("class '" + class_name + "': labels must be 0 or 1");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw MetricError("class '" + class_name + "': non-finite score");
  }
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw MetricError("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks over tie groups, then the Mann-Whitney U of the positives.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auroc undefined: need both positive and negative labels");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double idx = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

ConfidenceInterval bootstrap_ci(const LabeledScores& data, std::size_t n_boot, std::uint64_t seed) {
  data.validate();
  (void)auroc(data);  // reject single-class data up front
  if (n_boot == 0) throw MetricError("bootstrap needs at least one resample");
  const std::size_t n = data.scores.size();
  const Prg master(seed);
  std::vector<double> stats;
  stats.reserve(n_boot);
  ConfidenceInterval ci;
  std::vector<double> s(n);
  std::vector<int> l(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    Prg prg = master.derive(b);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = prg.uniform(n);
        s[i] = data.scores[j];
        l[i] = data.labels[j];
        pos += static_cast<std::size_t>(l[i]);
      }
      ok = pos > 0 && pos < n;
    }
    if (!ok) {
      ++ci.skipped;
      continue;
    }
    stats.push_back(auroc(s, l));
  }
  if (stats.empty()) throw MetricError("bootstrap: every resample was single-class");
  ci.lo = percentile(stats, 0.025);
  ci.hi = percentile(stats, 0.975);
  return ci;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double q;
  if (lambda < 1.18) {
    // Q = 1 - sqrt(2 pi)/lambda * sum exp(-(2j-1)^2 pi^2 / (8 lambda^2))
    const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double t = std::exp(c * (2.0 * j - 1.0) * (2.0 * j - 1.0));
      sum += t;
      if (t < 1e-300) break;
    }
    q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum;
  } else {
    double sum = 0.0, sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
      const double t = std::exp(-2.0 * j * j * lambda * lambda);
      sum += sign * t;
      sign = -sign;
      if (t < 1e-300) break;
    }
    q = 2.0 * sum;
  }
  return std::clamp(q, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw MetricError("K-S test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
  return r;
}

double round_half_away(double v, int decimals) {
  if (decimals < 0) throw MetricError("decimals must be non-negative");
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

std::vector<double> round_outputs(const std::vector<double>& values, int decimals) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = round_half_away(values[i], decimals);
  return out;
}

double brier(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size()) throw MetricError("brier: probabilities and labels differ in length");
  if (probs.empty()) throw MetricError("brier: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw MetricError("brier: probability outside [0, 1]");
    if (labels[i] != 0 && labels[i] != 1) throw MetricError("brier: labels must be 0 or 1");
    const double e = probs[i] - labels[i];
    acc += e * e;
  }
  return acc / static_cast<double>(probs.size());
}

std::string format_ci(double point, double lo, double hi, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << round_half_away(point, decimals) << " ["
     << round_half_away(lo, decimals) << " - " << round_half_away(hi, decimals) << "]";
  return os.str();
}

EquivalenceReport compare_runs(const std::vector<std::vector<double>>& insecure,
                               const std::vector<std::vector<double>>& secure,
                               const std::vector<std::vector<int>>& labels,
                               const std::vector<std::string>& class_names, const CompareOptions& options) {
  const std::size_t n = insecure.size();
  if (secure.size() != n || labels.size() != n) {
    throw MetricError("runs are misaligned: " + std::to_string(n) + " insecure, " + std::to_string(secure.size()) +
                      " secure, " + std::to_string(labels.size()) + " labelled images");
  }
  if (n == 0) throw MetricError("no images to compare");
  const std::size_t c = class_names.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (insecure[i].size() != c || secure[i].size() != c || labels[i].size() != c) {
      throw MetricError("image " + std::to_string(i) + " does not have " + std::to_string(c) + " classes in every run");
    }
  }
  EquivalenceReport rep;
  rep.images = n;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double d = std::fabs(insecure[i][k] - secure[i][k]);
      abs_sum += d;
      rep.max_abs_diff = std::max(rep.max_abs_diff, d);
    }
  }
  rep.mean_abs_diff = abs_sum / static_cast<double>(n * c);
  rep.all_accepted = true;
  for (std::size_t k = 0; k < c; ++k) {
    LabeledScores ins{{}, {}, class_names[k]}, sec{{}, {}, class_names[k]};
    for (std::size_t i = 0; i < n; ++i) {
      ins.scores.push_back(insecure[i][k]);
      sec.scores.push_back(secure[i][k]);
      ins.labels.push_back(labels[i][k]);
    }
    sec.labels = ins.labels;
    ClassComparison row;
    row.class_name = class_names[k];
    row.auroc_insecure = auroc(ins);
    row.auroc_secure = auroc(sec);
    // Same seed for both runs so the resamples pair up.
    const std::uint64_t seed = options.seed + k;
    row.ci_insecure = bootstrap_ci(ins, options.n_boot, seed);
    row.ci_secure = bootstrap_ci(sec, options.n_boot, seed);
    row.ks = ks_two_sample(round_outputs(ins.scores, options.ks_decimals), round_outputs(sec.scores, options.ks_decimals));
    row.accepted = row.ks.p_value >= options.alpha;
    row.brier_insecure = brier(ins.scores, ins.labels);
    row.brier_secure = brier(sec.scores, sec.labels);
    rep.max_auroc_delta = std::max(rep.max_auroc_delta, std::fabs(row.auroc_secure - row.auroc_insecure));
    rep.all_accepted = rep.all_accepted && row.accepted;
    rep.classes.push_back(std::move(row));
  }
  return rep;
}

std::string EquivalenceReport::to_json() const {
  nlohmann::json j;
  j["images"] = images;
  j["mean_abs_diff"] = mean_abs_diff;
  j["max_abs_diff"] = max_abs_diff;
  j["max_auroc_delta"] = max_auroc_delta;
  j["all_accepted"] = all_accepted;
  auto rows = nlohmann::json::array();
  for (const auto& r : classes) {
    rows.push_back({{"class", r.class_name},
                    {"auroc_insecure", r.auroc_insecure},
                    {"auroc_insecure_ci", {r.ci_insecure.lo, r.ci_insecure.hi}},
                    {"auroc_secure", r.auroc_secure},
                    {"auroc_secure_ci", {r.ci_secure.lo, r.ci_secure.hi}},
                    {"ks_statistic", r.ks.statistic},
                    {"ks_p_value", r.ks.p_value},
                    {"null_hypothesis", r.accepted ? "Accepted" : "Rejected"},
                    {"brier_insecure", round_half_away(r.brier_insecure, 3)},
                    {"brier_secure", round_half_away(r.brier_secure, 3)}});
  }
  j["classes"] = std::move(rows);
  if (!cost_summary.empty()) j["cost"] = nlohmann::json::parse(cost_summary);
  return j.dump(1) + "\n";
}

std::string EquivalenceReport::to_table() const {
  std::size_t w = 12;
  for (const auto& r : classes) w = std::max(w, r.class_name.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "Class" << std::setw(22) << "Insecure inference"
     << std::setw(22) << "Secure inference" << std::setw(22) << "Test Statistic (K-S)" << std::setw(20)
     << "p-Value (K-S test)" << std::setw(12) << "Null hyp." << std::setw(10) << "Brier ins" << "Brier sec\n";
  for (const auto& r : classes) {
    std::ostringstream d, p, bi, bs;
    d << std::fixed << std::setprecision(3) << r.ks.statistic;
    p << std::fixed << std::setprecision(3) << r.ks.p_value;
    bi << std::fixed << std::setprecision(3) << round_half_away(r.brier_insecure, 3);
    bs << std::fixed << std::setprecision(3) << round_half_away(r.brier_secure, 3);
    os << std::setw(static_cast<int>(w)) << r.class_name << std::setw(22)
       << format_ci(r.auroc_insecure, r.ci_insecure.lo, r.ci_insecure.hi) << std::setw(22)
       << format_ci(r.auroc_secure, r.ci_secure.lo, r.ci_secure.hi) << std::setw(22) << d.str() << std::setw(20)
       << p.str() << std::setw(12) << (r.accepted ? "Accepted" : "Rejected") << std::setw(10) << bi.str() << bs.str()
       << "\n";
  }
  std::ostringstream tail;
  tail << std::setprecision(6) << "images " << images << ", mean |secure - insecure| " << mean_abs_diff
       << ", max |dAUROC| " << max_auroc_delta << "\n";
  os << tail.str();
  return os.str();
}

}  // namespace sealedinfer
