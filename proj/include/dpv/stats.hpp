#pragma once

#include <cstdint>
#include <span>

namespace dpv {

struct ArmStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double var = 0.0;  // sample variance, n-1 divisor; meaningful only for n >= 2

  bool var_defined() const { return n >= 2; }
};

ArmStats arm_stats(std::span<const double> values);

struct EligibilityConfig {
  double level = 0.30;      // significance level l
  std::int64_t n_min = 10;  // minimum per-arm count
  double var_floor = 1e-12; // guard on the squared denominator

  void validate() const;
};

/// Two-sample statistic |mean_T - mean_C| / sqrt(var_T/n_T + var_C/n_C).
/// When the squared denominator is below var_floor: 0 if the means are
/// equal, +infinity otherwise (the limit of the statistic).
double welch_statistic(const ArmStats& test, const ArmStats& control,
                       double var_floor = 1e-12);

/// Inverse standard normal CDF, |error| <= 1e-9. Exactly antisymmetric:
/// normal_quantile(p) == -normal_quantile(1-p).
double normal_quantile(double p);

/// Eligibility criterion: both arms at least n_min and the two-sample
/// statistic above the two-sided normal quantile for level cfg.level.
/// Undersized arms yield false, never an error.
bool is_eligible(const ArmStats& test, const ArmStats& control,
                 const EligibilityConfig& cfg);

}  // namespace dpv
