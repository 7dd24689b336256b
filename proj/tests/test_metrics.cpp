#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/metrics.hpp"
#include "sealedinfer/prg.hpp"

using namespace sealedinfer;

namespace {

// Fraction of (positive, negative) pairs ordered correctly, ties counting half.
double auroc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

// Largest ECDF gap, evaluated at every sample point.
double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ecdf = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double x) { return x <= t; })) /
           static_cast<double>(v.size());
  };
  double d = 0;
  for (const auto* v : {&a, &b})
    for (double t : *v) d = std::max(d, std::fabs(ecdf(a, t) - ecdf(b, t)));
  return d;
}

LabeledScores random_scores(Prg& prg, std::size_t n, double shift, bool discrete) {
  LabeledScores d;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(prg.uniform(2));
    double s = prg.normal() + shift * y;
    if (discrete) s = std::round(s * 2) / 2;
    d.scores.push_back(s);
    d.labels.push_back(y);
  }
  d.labels[0] = 0;
  d.labels[1] = 1;
  return d;
}

}  // namespace

TEST_CASE("AUROC examples") {
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1}), MetricError);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {0, 2}), MetricError);
}

TEST_CASE("AUROC agrees with the pairwise definition") {
  Prg prg(70);
  for (int t = 0; t < 200; ++t) {
    const LabeledScores d = random_scores(prg, 2 + prg.uniform(80), 0.7, t % 2 == 0);
    CHECK(std::fabs(auroc(d) - auroc_pairs(d.scores, d.labels)) <= 1e-12);
  }
}

TEST_CASE("AUROC is invariant under strictly increasing transforms") {
  Prg prg(71);
  for (int t = 0; t < 50; ++t) {
    LabeledScores d = random_scores(prg, 60, 1.0, t % 2 == 0);
    const double a = auroc(d);
    for (auto& s : d.scores) s = std::exp(3 * s) + 5;
    CHECK(auroc(d) == doctest::Approx(a).epsilon(1e-12));
  }
}

TEST_CASE("Kolmogorov distribution tail") {
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(0.5) == doctest::Approx(0.9639).epsilon(1e-3));
  CHECK(kolmogorov_q(1.0) == doctest::Approx(0.2700).epsilon(1e-3));
  CHECK(kolmogorov_q(1.36) == doctest::Approx(0.0494).epsilon(2e-2));
  CHECK(kolmogorov_q(3.0) < 1e-6);
  double prev = 1.0;
  for (double l = 0.01; l < 4; l += 0.01) {
    const double q = kolmogorov_q(l);
    CHECK(q <= prev + 1e-12);
    CHECK(q >= 0.0);
    prev = q;
  }
  // The two series agree where they hand over.
  CHECK(kolmogorov_q(1.18 - 1e-9) == doctest::Approx(kolmogorov_q(1.18)).epsilon(1e-7));
}

TEST_CASE("K-S examples") {
  const KsResult same = ks_two_sample({1, 2, 3, 4}, {1, 2, 3, 4});
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == doctest::Approx(1.0));
  const KsResult apart = ks_two_sample({1, 2, 3}, {10, 11, 12});
  CHECK(apart.statistic == 1.0);
  CHECK(ks_two_sample({1, 2, 3}, {1.5, 2.5, 3.5}).statistic == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(ks_two_sample({}, {1.0}), MetricError);
}

TEST_CASE("K-S statistic agrees with the ECDF definition and p falls with D") {
  Prg prg(72);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(1 + prg.uniform(40)), b(1 + prg.uniform(40));
    for (auto& v : a) v = std::round(prg.normal() * 4) / 4;
    for (auto& v : b) v = std::round((prg.normal() + 0.3) * 4) / 4;
    CHECK(ks_two_sample(a, b).statistic == doctest::Approx(ks_brute(a, b)).epsilon(1e-12));
  }
  std::vector<double> a(50);
  std::iota(a.begin(), a.end(), 0.0);
  double prev = 1.0;
  for (int shift = 0; shift <= 50; shift += 5) {
    std::vector<double> b = a;
    for (auto& v : b) v += shift;
    const KsResult r = ks_two_sample(a, b);
    CHECK(r.p_value <= prev);
    prev = r.p_value;
  }
}

TEST_CASE("K-S has roughly nominal size under the null") {
  Prg prg(73);
  int rejects = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(200), b(200);
    for (auto& v : a) v = prg.normal();
    for (auto& v : b) v = prg.normal();
    rejects += ks_two_sample(a, b).p_value < 0.05;
  }
  CHECK(rejects >= 20);
  CHECK(rejects <= 80);
}

TEST_CASE("rounding half away from zero") {
  CHECK(round_half_away(0.005, 2) == doctest::Approx(0.01));
  CHECK(round_half_away(0.9949, 2) == doctest::Approx(0.99));
  CHECK(round_half_away(-0.125, 2) == doctest::Approx(-0.13));
  CHECK(round_half_away(2.5, 0) == 3.0);
  Prg prg(74);
  for (int i = 0; i < 1000; ++i) {
    const double v = prg.uniform_real();
    const double r = round_half_away(v, 2);
    CHECK(round_half_away(r, 2) == r);
    CHECK(std::fabs(r - v) <= 0.005 + 1e-12);
  }
  CHECK(round_outputs({0.123, 0.456}, 1) == std::vector<double>{0.1, 0.5});
}

TEST_CASE("Brier score") {
  CHECK(brier({1, 0}, {1, 0}) == 0.0);
  CHECK(brier({0, 1}, {1, 0}) == 1.0);
  CHECK(brier({0.5, 0.5}, {1, 0}) == 0.25);
  CHECK_THROWS_AS(brier({1.5}, {1}), MetricError);
  CHECK_THROWS_AS(brier({0.5}, {2}), MetricError);
  Prg prg(75);
  std::vector<double> p(30);
  std::vector<int> y(30);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = prg.uniform_real();
    y[i] = static_cast<int>(prg.uniform(2));
  }
  const double b = brier(p, y);
  std::reverse(p.begin(), p.end());
  std::reverse(y.begin(), y.end());
  CHECK(brier(p, y) == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("bootstrap confidence intervals") {
  Prg prg(76);
  const LabeledScores d = random_scores(prg, 100, 1.0, false);
  const ConfidenceInterval a = bootstrap_ci(d, 500, 9);
  const ConfidenceInterval b = bootstrap_ci(d, 500, 9);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo <= auroc(d));
  CHECK(auroc(d) <= a.hi);
  const ConfidenceInterval one = bootstrap_ci(d, 1, 3);
  CHECK(one.lo == one.hi);
  CHECK_THROWS(bootstrap_ci(d, 0, 3));
}

TEST_CASE("bootstrap intervals cover the true AUROC about 95% of the time") {
  // Positives N(1,1) against negatives N(0,1): AUROC = Phi(1/sqrt 2).
  const double truth = 0.5 * std::erfc(-1.0 / 2.0);
  Prg prg(77);
  int covered = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const LabeledScores d = random_scores(prg, 200, 1.0, false);
    const ConfidenceInterval ci = bootstrap_ci(d, 200, 1000 + t);
    covered += ci.lo <= truth && truth <= ci.hi;
  }
  CHECK(covered >= 176);
  CHECK(covered <= 198);
}

TEST_CASE("interval formatting") {
  CHECK(format_ci(0.9, 0.871, 0.934) == "0.90 [0.87 - 0.93]");
  CHECK(format_ci(0.5, 0.4, 0.6, 3) == "0.500 [0.400 - 0.600]");
}

TEST_CASE("comparing two runs") {
  Prg prg(78);
  const std::size_t n = 200, c = 3;
  std::vector<std::vector<double>> probs(n, std::vector<double>(c));
  std::vector<std::vector<int>> labels(n, std::vector<int>(c));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      labels[i][k] = static_cast<int>(prg.uniform(2));
      probs[i][k] = std::clamp(0.5 + 0.2 * labels[i][k] + 0.15 * prg.normal(), 0.0, 1.0);
    }
  const std::vector<std::string> names{"a", "b", "c"};
  CompareOptions opt;
  opt.n_boot = 200;

  const EquivalenceReport same = compare_runs(probs, probs, labels, names, opt);
  CHECK(same.all_accepted);
  CHECK(same.max_abs_diff == 0.0);
  CHECK(same.max_auroc_delta == 0.0);
  REQUIRE(same.classes.size() == 3);
  for (const auto& cc : same.classes) {
    CHECK(cc.ks.p_value == doctest::Approx(1.0));
    CHECK(cc.ci_insecure.lo == cc.ci_secure.lo);
    CHECK(cc.brier_insecure == cc.brier_secure);
  }
  const auto j = nlohmann::json::parse(same.to_json());
  CHECK(j["classes"].size() == 3);
  CHECK(same.to_table().find("Accepted") != std::string::npos);

  auto shifted = probs;
  for (auto& row : shifted) row[1] = std::min(1.0, row[1] + 0.5);
  const EquivalenceReport diff = compare_runs(probs, shifted, labels, names, opt);
  CHECK_FALSE(diff.all_accepted);
  CHECK(diff.classes[0].accepted);
  CHECK_FALSE(diff.classes[1].accepted);
  CHECK(diff.to_table().find("Rejected") != std::string::npos);

  auto short_run = probs;
  short_run.pop_back();
  CHECK_THROWS_AS(compare_runs(probs, short_run, labels, names, opt), MetricError);
  CHECK_THROWS_AS(compare_runs(probs, probs, labels, {"a"}, opt), MetricError);
}
