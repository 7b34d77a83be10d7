#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpv/experiment_data.hpp"
#include "dpv/representation.hpp"
#include "dpv/stats.hpp"
#include "dpv/valuation.hpp"

namespace dpv {

struct PlantedDirection {
  std::vector<double> h;  // unit F-vector
  double v0 = 0.0;        // threshold value on h . x
  double effect_plus = 0.0;
  double effect_minus = 0.0;
};

enum class MetricModel { Gaussian, Bernoulli };

struct SyntheticConfig {
  std::int64_t n_instances = 1000;
  int F = 5;
  double test_fraction = 0.5;
  double noise_sd = 1.0;
  std::vector<PlantedDirection> planted_directions;
  double baseline_mean = 0.0;
  int feature_level_count = 2;
  std::uint64_t seed = 1;
  MetricModel metric_model = MetricModel::Gaussian;

  void validate() const;
};

struct SyntheticResult {
  ExperimentDataset dataset;
  std::vector<double> true_effect;  // parallel to dataset.instances
};

SyntheticResult generate_synthetic(const SyntheticConfig& cfg);

struct IncrementalMetric {
  std::optional<double> diff;  // test mean - control mean within the group
  std::optional<double> sd;    // sqrt(var_T/n_T + var_C/n_C)
  std::size_t n = 0;
  std::int64_t n_test = 0;
  std::int64_t n_control = 0;
  bool significant = false;
};

struct GroupReport {
  std::string label;
  std::size_t size = 0;
  double mean_dpv = 0.0;
  IncrementalMetric incremental;
};

struct QuartileReport {
  std::array<GroupReport, 4> groups;  // <Q1, Q1-Q2, Q2-Q3, >Q3
  double q1 = 0.0, q2 = 0.0, q3 = 0.0;
  IncrementalMetric global;  // whole train population, reported for contrast
  double level = 0.30;
  std::size_t eligible_subpopulations = 0;
};

/// Nearest-rank quartiles (upper convention: Q_p = sorted[floor(p*n)]);
/// groups are [min,Q1), [Q1,Q2), [Q2,Q3), [Q3,max], ties to the upper group.
std::array<std::vector<std::string>, 4> quartile_groups(
    const std::vector<std::pair<std::string, double>>& scores);

IncrementalMetric incremental_metric(const std::vector<std::string>& group,
                                     const ExperimentDataset& test_data,
                                     const EligibilityConfig& cfg);

struct RunConfig;

struct ValidationOutcome {
  QuartileReport report;
  EligibleSet model;
  std::vector<std::pair<std::string, double>> scores;
  SearchOutcome search;
};

/// Full pipeline: search on train, enumerate/filter/dedupe on train,
/// score test, quartile groups, per-group incremental metric. Test
/// metrics are read only in the final step.
ValidationOutcome run_validation(const ExperimentDataset& train,
                                 const ExperimentDataset& test,
                                 const RunConfig& cfg);

nlohmann::ordered_json report_to_json(const QuartileReport& r);
std::string report_to_table(const QuartileReport& r,
                            const std::string& metric_name = "metric");

}  // namespace dpv
