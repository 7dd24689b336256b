#pragma once

// Statistics for comparing secure and plaintext inference outputs.

#include <cstdint>
#include <string>
#include <vector>

namespace sealedinfer {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<int> labels;
  std::string class_name;

  // Throws MetricError on length mismatch, non-binary labels or non-finite scores.
  void validate() const;
};

// P(score+ > score-) + 0.5 P(tie). Throws MetricError without both classes.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
inline double auroc(const LabeledScores& d) { return auroc(d.scores, d.labels); }

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t skipped = 0;  // degenerate resamples given up on
};

inline constexpr std::size_t kDefaultBootstrap = 1000;

// Percentile bootstrap (2.5 / 97.5) of AUROC over resampled pairs.
ConfidenceInterval bootstrap_ci(const LabeledScores& data, std::size_t n_boot, std::uint64_t seed);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Kolmogorov distribution tail Q(lambda).
double kolmogorov_q(double lambda);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Decimal rounding, halves away from zero.
double round_half_away(double v, int decimals);
std::vector<double> round_outputs(const std::vector<double>& values, int decimals);

double brier(const std::vector<double>& probs, const std::vector<int>& labels);

// "0.90 [0.87 - 0.93]"
std::string format_ci(double point, double lo, double hi, int decimals = 2);

struct ClassComparison {
  std::string class_name;
  double auroc_insecure = 0.0;
  ConfidenceInterval ci_insecure;
  double auroc_secure = 0.0;
  ConfidenceInterval ci_secure;
  KsResult ks;
  bool accepted = false;  // p >= 0.05
  double brier_insecure = 0.0;
  double brier_secure = 0.0;
};

struct EquivalenceReport {
  std::vector<ClassComparison> classes;
  std::size_t images = 0;
  double mean_abs_diff = 0.0;
  double max_abs_diff = 0.0;
  double max_auroc_delta = 0.0;
  bool all_accepted = false;
  std::string cost_summary;  // free-form JSON text, may be empty

  std::string to_json() const;
  std::string to_table() const;
};

struct CompareOptions {
  std::size_t n_boot = kDefaultBootstrap;
  std::uint64_t seed = 0;
  int ks_decimals = 2;
  double alpha = 0.05;
};

// Outputs are probabilities indexed [image][class]; labels likewise.
EquivalenceReport compare_runs(const std::vector<std::vector<double>>& insecure,
                               const std::vector<std::vector<double>>& secure,
                               const std::vector<std::vector<int>>& labels,
                               const std::vector<std::string>& class_names, const CompareOptions& options);

}  // namespace sealedinfer
