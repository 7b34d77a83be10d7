#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "dpv/experiment_data.hpp"
#include "dpv/representation.hpp"
#include "dpv/stats.hpp"

namespace dpv {

struct Subpopulation {
  int rep_index = 0;
  std::vector<double> v;  // quantized value of H x (grid multiples)
  std::vector<std::string> member_ids;
  ArmStats stats_test;
  ArmStats stats_control;
  double effect = 0.0;      // mean_T - mean_C
  double volatility = 0.0;  // sqrt(var_T/n_T + var_C/n_C)
  bool eligible = false;

  std::int64_t total_count() const {
    return stats_test.n + stats_control.n;
  }
};

/// The model artifact: eligible, deduplicated subpopulations plus the
/// representations that induce them. member_ids are not serialized;
/// scoring needs only H, v and the per-arm stats.
struct EligibleSet {
  std::vector<AcceptedRepresentation> representations;
  std::vector<Subpopulation> subpops;
  double quantization = 1e-6;
  double level = 0.30;
  double var_floor = 1e-12;
  std::uint64_t seed = 0;
  int F = 0;
};

double quantize(double value, double grid);

std::vector<Subpopulation> enumerate_subpopulations(
    const Representation& H, const ExperimentDataset& dataset,
    double quantization, int rep_index = 0);

std::vector<Subpopulation> filter_eligible(std::vector<Subpopulation> groups,
                                           const EligibilityConfig& cfg);

/// Among subpopulations with identical member-id sets keeps the earliest
/// (lowest rep_index, then input order).
std::vector<Subpopulation> dedupe(std::vector<Subpopulation> subpops);

/// Normalized weights of the eligible subpopulations containing x,
/// parallel to model.subpops (0 for non-containing); proportional to
/// 1 / (max(volatility, sqrt(var_floor)) * sqrt(|S|)).
std::vector<double> dpv_weights(const Eigen::VectorXd& x,
                                const EligibleSet& model);

double dpv(const Eigen::VectorXd& x, const EligibleSet& model);

std::vector<std::pair<std::string, double>> score_dataset(
    const ExperimentDataset& test, const EligibleSet& model);

nlohmann::ordered_json model_to_json(const EligibleSet& model);
EligibleSet model_from_json(const nlohmann::json& j);

}  // namespace dpv
