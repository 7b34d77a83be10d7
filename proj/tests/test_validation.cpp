#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpv/config.hpp"
#include "dpv/error.hpp"
#include "dpv/validation.hpp"

using namespace dpv;

namespace {

std::vector<std::pair<std::string, double>> scores_of(std::vector<double> vals) {
  std::vector<std::pair<std::string, double>> s;
  for (std::size_t i = 0; i < vals.size(); ++i)
    s.emplace_back("i" + std::to_string(i + 1), vals[i]);
  return s;
}

// independent nearest-rank quantile (upper convention)
double ref_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size())));
  return v[std::min(idx, v.size() - 1)];
}

}  // namespace

TEST_CASE("generate_synthetic: noiseless construction is exact by region") {
  SyntheticConfig cfg;
  cfg.n_instances = 200;
  cfg.F = 3;
  cfg.noise_sd = 0.0;
  cfg.baseline_mean = 2.0;
  cfg.feature_level_count = 2;
  cfg.seed = 3;
  cfg.planted_directions.push_back({{1, 0, 0}, 1.0, 1.0, -1.0});
  SyntheticResult r = generate_synthetic(cfg);
  REQUIRE(r.dataset.size() == 200);
  REQUIRE(r.true_effect.size() == 200);
  for (std::size_t i = 0; i < r.dataset.size(); ++i) {
    const Instance& ins = r.dataset.instances[i];
    double expect_effect = ins.context[0] == 1.0 ? 1.0 : -1.0;
    CHECK(r.true_effect[i] == expect_effect);
    double want = 2.0 + (ins.arm == Arm::Test ? expect_effect : 0.0);
    CHECK(ins.metric == want);
  }
}

TEST_CASE("generate_synthetic: bit-reproducible per seed, different across seeds") {
  SyntheticConfig cfg;
  cfg.n_instances = 500;
  cfg.F = 4;
  cfg.seed = 11;
  SyntheticResult a = generate_synthetic(cfg);
  SyntheticResult b = generate_synthetic(cfg);
  CHECK(a.dataset == b.dataset);
  CHECK(a.true_effect == b.true_effect);
  cfg.seed = 12;
  CHECK(generate_synthetic(cfg).dataset != a.dataset);
}

TEST_CASE("generate_synthetic: balanced opposite effects cancel globally") {
  // feature_level_count 2 and h* = e1 puts half the population in each
  // region, so the global effect is ~0 by construction.
  SyntheticConfig cfg;
  cfg.n_instances = 4000;
  cfg.F = 3;
  cfg.noise_sd = 1.0;
  cfg.feature_level_count = 2;
  cfg.seed = 19;
  cfg.planted_directions.push_back({{1, 0, 0}, 1.0, 0.5, -0.5});
  SyntheticResult r = generate_synthetic(cfg);
  std::vector<std::string> everyone;
  for (const Instance& ins : r.dataset.instances) everyone.push_back(ins.id);
  EligibilityConfig ecfg;
  IncrementalMetric m = incremental_metric(everyone, r.dataset, ecfg);
  REQUIRE(m.diff.has_value());
  REQUIRE(m.sd.has_value());
  CHECK(std::abs(*m.diff) <= 3.0 * *m.sd);
}

TEST_CASE("generate_synthetic: config validation names the field") {
  SyntheticConfig cfg;
  cfg.test_fraction = 1.5;
  try {
    generate_synthetic(cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == errc::config_invalid);
    CHECK(std::string(e.what()).find("test_fraction") != std::string::npos);
  }
  SyntheticConfig bad;
  bad.F = 2;
  bad.planted_directions.push_back({{1.0, 1.0}, 0.0, 0.1, -0.1});
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
}

TEST_CASE("quartile_groups: evenly spaced scores 1..8") {
  auto g = quartile_groups(scores_of({1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(g[0] == std::vector<std::string>{"i1", "i2"});
  CHECK(g[1] == std::vector<std::string>{"i3", "i4"});
  CHECK(g[2] == std::vector<std::string>{"i5", "i6"});
  CHECK(g[3] == std::vector<std::string>{"i7", "i8"});
}

TEST_CASE("quartile_groups: total tie puts everyone in the top group") {
  auto g = quartile_groups(scores_of({0, 0, 0, 0, 0}));
  CHECK(g[0].empty());
  CHECK(g[1].empty());
  CHECK(g[2].empty());
  CHECK(g[3].size() == 5);
}

TEST_CASE("quartile_groups: multiset boundaries match the rank oracle") {
  std::vector<double> vals = {0, 0, 0, 1, 2, 3, 4, 5};
  auto g = quartile_groups(scores_of(vals));
  double q1 = ref_quantile(vals, 0.25), q2 = ref_quantile(vals, 0.50),
         q3 = ref_quantile(vals, 0.75);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    int want = vals[i] < q1 ? 0 : vals[i] < q2 ? 1 : vals[i] < q3 ? 2 : 3;
    std::string id = "i" + std::to_string(i + 1);
    for (int gi = 0; gi < 4; ++gi) {
      bool in = std::find(g[gi].begin(), g[gi].end(), id) != g[gi].end();
      CHECK(in == (gi == want));
    }
  }
}

TEST_CASE("quartile_groups: partition property and the size-4 floor") {
  CHECK_THROWS_AS(quartile_groups(scores_of({1, 2, 3})), Error);
  std::vector<double> vals;
  std::mt19937_64 rng(15);
  for (int i = 0; i < 101; ++i) vals.push_back(double(rng() % 10));
  auto g = quartile_groups(scores_of(vals));
  std::set<std::string> all;
  std::size_t total = 0;
  for (const auto& grp : g) {
    for (const auto& id : grp) CHECK(all.insert(id).second);
    total += grp.size();
  }
  CHECK(total == vals.size());
}

TEST_CASE("incremental_metric: constant arms give an infinite statistic") {
  ExperimentDataset d;
  d.F = 1;
  d.instances = {{"a", 0, Arm::Test, 1.0, {0.0}},
                 {"b", 1, Arm::Test, 1.0, {0.0}},
                 {"c", 2, Arm::Control, 0.0, {0.0}},
                 {"d", 3, Arm::Control, 0.0, {0.0}}};
  EligibilityConfig cfg;
  cfg.n_min = 2;
  IncrementalMetric m = incremental_metric({"a", "b", "c", "d"}, d, cfg);
  REQUIRE(m.diff.has_value());
  CHECK(*m.diff == doctest::Approx(1.0));
  REQUIRE(m.sd.has_value());
  CHECK(*m.sd == 0.0);
  CHECK(m.significant);
  CHECK(m.n == 4);

  IncrementalMetric empty_arm = incremental_metric({"a", "b"}, d, cfg);
  CHECK_FALSE(empty_arm.diff.has_value());
  CHECK_FALSE(empty_arm.significant);

  CHECK_THROWS_AS(incremental_metric({"nope"}, d, cfg), Error);
}

TEST_CASE("incremental_metric: matches direct recomputation on synthetic data") {
  SyntheticConfig cfg;
  cfg.n_instances = 300;
  cfg.F = 2;
  cfg.seed = 8;
  cfg.planted_directions.push_back({{1, 0}, 1.0, 0.7, -0.7});
  ExperimentDataset d = generate_synthetic(cfg).dataset;
  std::vector<std::string> group;
  std::vector<double> yt, yc;
  for (const Instance& ins : d.instances) {
    if (ins.context[0] != 1.0) continue;
    group.push_back(ins.id);
    (ins.arm == Arm::Test ? yt : yc).push_back(ins.metric);
  }
  EligibilityConfig ecfg;
  IncrementalMetric m = incremental_metric(group, d, ecfg);
  ArmStats st = arm_stats(yt), sc = arm_stats(yc);
  REQUIRE(m.diff.has_value());
  CHECK(*m.diff == doctest::Approx(st.mean - sc.mean).epsilon(1e-12));
  CHECK(*m.sd == doctest::Approx(std::sqrt(st.var / double(st.n) + sc.var / double(sc.n))).epsilon(1e-12));
  CHECK(m.n_test == st.n);
  CHECK(m.n_control == sc.n);
}

TEST_CASE("run_validation: planted fixture orders the quartiles") {
  SyntheticConfig scfg;
  scfg.n_instances = 6000;
  scfg.F = 4;
  scfg.noise_sd = 1.0;
  scfg.feature_level_count = 2;
  scfg.seed = 14;
  scfg.planted_directions.push_back({{1, 0, 0, 0}, 1.0, 0.6, -0.6});
  SyntheticResult r = generate_synthetic(scfg);
  auto [train, test] = chronological_split(r.dataset, 0.8);

  RunConfig cfg;
  cfg.quantization = 1e-3;
  cfg.eligibility.level = 0.30;
  cfg.search.K_values = {1, 2, 3};
  cfg.search.max_matrices = 6;
  cfg.search.pair_cap = 20000;
  cfg.search.seed = 14;

  ValidationOutcome out = run_validation(train, test, cfg);
  CHECK(out.report.eligible_subpopulations >= 1);
  CHECK(out.search.max_ortho_error <= 1e-9);

  const GroupReport& bottom = out.report.groups[0];
  const GroupReport& top = out.report.groups[3];
  REQUIRE(top.incremental.diff.has_value());
  REQUIRE(bottom.incremental.diff.has_value());
  CHECK(*top.incremental.diff > 0.0);
  CHECK(*bottom.incremental.diff < 0.0);
  CHECK(top.mean_dpv > bottom.mean_dpv);

  // the four groups partition the test split
  std::size_t total = 0;
  for (const GroupReport& g : out.report.groups) total += g.size;
  CHECK(total == test.size());
}

TEST_CASE("run_validation: model artifact is a pure function of the train split") {
  SyntheticConfig scfg;
  scfg.n_instances = 2000;
  scfg.F = 3;
  scfg.feature_level_count = 2;
  scfg.seed = 23;
  scfg.planted_directions.push_back({{1, 0, 0}, 1.0, 0.8, -0.8});
  SyntheticResult r = generate_synthetic(scfg);
  auto [train, test] = chronological_split(r.dataset, 0.8);

  RunConfig cfg;
  cfg.quantization = 1e-3;
  cfg.search.K_values = {1};
  cfg.search.max_matrices = 2;
  cfg.search.seed = 5;

  // scramble the test metrics: the model must not change
  ExperimentDataset test_scrambled = test;
  for (Instance& ins : test_scrambled.instances) ins.metric = -99.0 * ins.metric + 7.0;

  ValidationOutcome a = run_validation(train, test, cfg);
  ValidationOutcome b = run_validation(train, test_scrambled, cfg);
  CHECK(model_to_json(a.model).dump() == model_to_json(b.model).dump());
  // and scores depend only on contexts, which were untouched
  CHECK(a.scores == b.scores);
}

TEST_CASE("run_validation: tiny test split trips the quartile floor") {
  SyntheticConfig scfg;
  scfg.n_instances = 30;
  scfg.F = 2;
  scfg.seed = 2;
  SyntheticResult r = generate_synthetic(scfg);
  auto [train, test] = chronological_split(r.dataset, 0.9);
  RunConfig cfg;
  cfg.search.K_values = {1};
  try {
    run_validation(train, test, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == errc::too_few_instances);
  }
}

TEST_CASE("report serialization: JSON shape and table rows") {
  QuartileReport r;
  r.level = 0.30;
  r.eligible_subpopulations = 2;
  r.q1 = -0.1;
  r.q2 = 0.0;
  r.q3 = 0.2;
  for (int g = 0; g < 4; ++g) {
    r.groups[g].label = g == 0 ? "<Q1" : g == 3 ? ">Q3" : "mid";
    r.groups[g].size = 10;
    r.groups[g].incremental.diff = 0.1 * g;
    r.groups[g].incremental.sd = 0.05;
    r.groups[g].incremental.n = 10;
    r.groups[g].incremental.significant = g == 3;
  }
  r.global.n = 40;  // diff left undefined
  nlohmann::ordered_json j = report_to_json(r);
  CHECK(j["groups"].size() == 4);
  CHECK(j["global"]["diff"].is_null());
  CHECK(j["groups"][3]["incremental"]["significant"] == true);
  CHECK(j["quartiles"]["q2"] == 0.0);

  std::string table = report_to_table(r, "ctr");
  CHECK(table.find("ctr") != std::string::npos);
  CHECK(table.find("<Q1") != std::string::npos);
  CHECK(table.find("global") != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);  // header + 4 + global
}
