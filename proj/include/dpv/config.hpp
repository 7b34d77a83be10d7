#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "dpv/experiment_data.hpp"
#include "dpv/representation.hpp"
#include "dpv/stats.hpp"
#include "dpv/validation.hpp"

namespace dpv {

/// One JSON config file drives every command. Unknown keys are rejected.
struct RunConfig {
  DiscretizationConfig discretization;
  EligibilityConfig eligibility;
  SearchConfig search;
  SyntheticConfig synthetic;
  double train_fraction = 0.8;
  double quantization = 1e-6;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::string& path);

}  // namespace dpv
