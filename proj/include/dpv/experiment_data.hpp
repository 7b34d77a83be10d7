#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dpv {

enum class Arm { Test, Control };

struct Instance {
  std::string id;
  std::int64_t timestamp = 0;
  Arm arm = Arm::Control;
  double metric = 0.0;
  std::vector<double> context;

  bool operator==(const Instance&) const = default;
};

/// Canonical randomized-experiment log: instances sorted by timestamp,
/// every context of length F, both arms non-empty.
struct ExperimentDataset {
  std::vector<Instance> instances;
  int F = 0;
  std::vector<std::vector<double>> feature_levels;  // sorted distinct per feature

  std::size_t size() const { return instances.size(); }
  std::size_t arm_count(Arm a) const;

  /// Recompute feature_levels from the instances.
  void refresh_feature_levels();

  /// Check structural invariants; throws on violation.
  void validate() const;

  bool operator==(const ExperimentDataset&) const = default;
};

struct CsvSchema {
  std::string id = "id";
  std::string timestamp = "ts";
  std::string arm = "arm";
  std::string metric = "y";
  // When empty, every header column not claimed above is a feature,
  // in header order.
  std::vector<std::string> features;
};

struct Passthrough {
  bool operator==(const Passthrough&) const = default;
};
struct EqualWidthBins {
  int count = 1;
  bool operator==(const EqualWidthBins&) const = default;
};
struct QuantileBins {
  int count = 1;
  bool operator==(const QuantileBins&) const = default;
};
struct MergeBelowCount {
  std::int64_t min_count = 1;
  bool operator==(const MergeBelowCount&) const = default;
};

using FeatureRule =
    std::variant<Passthrough, EqualWidthBins, QuantileBins, MergeBelowCount>;

struct DiscretizationConfig {
  // One rule per feature; empty means Passthrough everywhere.
  std::vector<FeatureRule> rules;

  void validate(int F) const;
};

struct DiscretizeResult {
  ExperimentDataset dataset;
  std::vector<std::string> warnings;  // e.g. degenerate (constant) features
};

ExperimentDataset ingest_csv(std::istream& in, const CsvSchema& schema = {});

/// Writes the dataset as CSV. When header_comment is non-empty it is
/// emitted first as a '#'-prefixed line (skipped by ingest_csv).
void emit_csv(const ExperimentDataset& d, std::ostream& out,
              const CsvSchema& schema = {},
              const std::string& header_comment = "");

DiscretizeResult discretize(const ExperimentDataset& d,
                            const DiscretizationConfig& cfg);

std::pair<ExperimentDataset, ExperimentDataset> chronological_split(
    const ExperimentDataset& d, double train_fraction);

nlohmann::ordered_json dataset_to_json(const ExperimentDataset& d);
ExperimentDataset dataset_from_json(const nlohmann::json& j);

}  // namespace dpv
