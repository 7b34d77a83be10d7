#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "dpv/error.hpp"
#include "dpv/stats.hpp"

using namespace dpv;

namespace {

ArmStats stats_of(std::vector<double> v) { return arm_stats(v); }

// Independent reference: two-sample statistic computed straight from raw
// samples, no shared code with welch_statistic.
double reference_welch(const std::vector<double>& t, const std::vector<double>& c) {
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var = [&](const std::vector<double>& v) {
    double m = mean(v), s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  return std::abs(mean(t) - mean(c)) /
         std::sqrt(var(t) / static_cast<double>(t.size()) + var(c) / static_cast<double>(c.size()));
}

// High-precision inverse normal CDF by bisection on 0.5*erfc(-x/sqrt(2)).
double bisect_quantile(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("arm_stats basics") {
  ArmStats s = stats_of({1, 1, 0, 0});
  CHECK(s.n == 4);
  CHECK(s.mean == doctest::Approx(0.5));
  CHECK(s.var == doctest::Approx(1.0 / 3.0));
  CHECK(stats_of({}).n == 0);
  CHECK_FALSE(stats_of({3.0}).var_defined());
}

TEST_CASE("welch_statistic: equal means give zero") {
  ArmStats a = stats_of({1, 2, 3});
  CHECK(welch_statistic(a, a) == 0.0);
}

TEST_CASE("welch_statistic: hand-computed example with one constant arm") {
  ArmStats t = stats_of({1, 1, 0, 0});
  ArmStats c = stats_of({0, 0, 0, 0});
  double got = welch_statistic(t, c);
  CHECK(got == doctest::Approx(0.5 / std::sqrt(1.0 / 12.0)).epsilon(1e-12));
  CHECK(got == doctest::Approx(1.7321).epsilon(1e-4));
  CHECK(got == doctest::Approx(reference_welch({1, 1, 0, 0}, {0, 0, 0, 0})).epsilon(1e-12));
}

TEST_CASE("welch_statistic: pre-combined diff/sd") {
  // diff -0.13 with sd-of-diff 0.23: arrange var/n so the denominator is 0.23^2
  ArmStats t{100, -0.13, 0.23 * 0.23 * 50.0};
  ArmStats c{100, 0.0, 0.23 * 0.23 * 50.0};
  CHECK(welch_statistic(t, c) == doctest::Approx(0.5652).epsilon(1e-3));
}

TEST_CASE("welch_statistic: insufficient data") {
  ArmStats one{1, 5.0, 0.0};
  ArmStats ok = stats_of({1, 2, 3});
  CHECK_THROWS_AS(welch_statistic(one, ok), Error);
  CHECK_THROWS_AS(welch_statistic(ok, one), Error);
}

TEST_CASE("welch_statistic: zero-variance guard") {
  ArmStats t = stats_of({2, 2, 2});
  ArmStats c = stats_of({1, 1, 1});
  CHECK(std::isinf(welch_statistic(t, c)));
  CHECK(welch_statistic(t, t) == 0.0);
}

TEST_CASE("welch_statistic invariance under shift and positive scaling") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> t, c;
    for (int i = 0; i < 30; ++i) t.push_back(g(rng));
    for (int i = 0; i < 25; ++i) c.push_back(g(rng) + 0.3);
    double base = welch_statistic(stats_of(t), stats_of(c));
    double shift = g(rng), scale = std::exp(g(rng));
    std::vector<double> t2 = t, c2 = c;
    for (double& x : t2) x = x * scale + shift;
    for (double& x : c2) x = x * scale + shift;
    CHECK(welch_statistic(stats_of(t2), stats_of(c2)) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("normal_quantile: reference values") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.85) == doctest::Approx(1.036433).epsilon(1e-6));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
}

TEST_CASE("normal_quantile: accuracy against bisection oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 500; ++i) {
    double p = u(rng);
    CHECK(std::abs(normal_quantile(p) - bisect_quantile(p)) <= 1e-9);
  }
}

TEST_CASE("normal_quantile: exact antisymmetry on exact-complement inputs") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> k(1, (1 << 20) - 1);
  for (int i = 0; i < 2000; ++i) {
    double p = static_cast<double>(k(rng)) / (1 << 20);  // 1-p is exact
    CHECK(normal_quantile(p) == -normal_quantile(1.0 - p));
  }
}

TEST_CASE("normal_quantile: domain errors") {
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
  CHECK_THROWS_AS(normal_quantile(-0.2), Error);
}

TEST_CASE("is_eligible: the two global categories at l = 0.30") {
  EligibilityConfig cfg;
  cfg.level = 0.30;
  // category A: diff -0.13, sd 0.23 -> stat 0.5652 < 1.0364
  ArmStats ta{100, -0.13, 0.23 * 0.23 * 50.0};
  ArmStats ca{100, 0.0, 0.23 * 0.23 * 50.0};
  CHECK_FALSE(is_eligible(ta, ca, cfg));
  // category B: diff 0.34, sd 0.30 -> stat 1.1333 > 1.0364
  ArmStats tb{100, 0.34, 0.30 * 0.30 * 50.0};
  ArmStats cb{100, 0.0, 0.30 * 0.30 * 50.0};
  CHECK(is_eligible(tb, cb, cfg));
}

TEST_CASE("is_eligible: undersized arms are ineligible, not an error") {
  EligibilityConfig cfg;
  ArmStats tiny{1, 100.0, 0.0};
  ArmStats big{1000, 0.0, 1.0};
  CHECK_FALSE(is_eligible(tiny, big, cfg));
  CHECK_FALSE(is_eligible(big, tiny, cfg));
}

TEST_CASE("eligibility config validation") {
  EligibilityConfig bad;
  bad.level = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = EligibilityConfig{};
  bad.n_min = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
}
