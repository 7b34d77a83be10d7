#include "dpv/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dpv/error.hpp"

namespace dpv {

ArmStats arm_stats(std::span<const double> values) {
  ArmStats s;
  s.n = static_cast<std::int64_t>(values.size());
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (double v : values) {
      double d = v - s.mean;
      ss += d * d;
    }
    s.var = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

void EligibilityConfig::validate() const {
  if (!(level > 0.0 && level < 1.0))
    raise(errc::config_invalid, "eligibility.level must be in (0,1)");
  if (n_min < 2) raise(errc::config_invalid, "eligibility.n_min must be >= 2");
  if (var_floor < 0.0)
    raise(errc::config_invalid, "eligibility.var_floor must be >= 0");
}

double welch_statistic(const ArmStats& test, const ArmStats& control,
                       double var_floor) {
  if (test.n < 2 || control.n < 2)
    raise(errc::insufficient_data,
          "welch_statistic needs n >= 2 in both arms (got " +
              std::to_string(test.n) + ", " + std::to_string(control.n) + ")");
  double diff = test.mean - control.mean;
  double denom_sq = test.var / static_cast<double>(test.n) +
                    control.var / static_cast<double>(control.n);
  if (denom_sq < var_floor)
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(diff) / std::sqrt(denom_sq);
}

namespace {

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Acklam's rational approximation, accurate to ~1.15e-9 before refinement.
double acklam(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // central region only; callers symmetrize so p <= 0.5 here
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double quantile_lower_half(double p) {
  double x = acklam(p);
  // one Halley refinement against the exact CDF
  double e = standard_normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    raise(errc::domain_error, "normal_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  // symmetrized so that normal_quantile(p) == -normal_quantile(1-p) exactly
  if (p > 0.5) return -quantile_lower_half(1.0 - p);
  return quantile_lower_half(p);
}

bool is_eligible(const ArmStats& test, const ArmStats& control,
                 const EligibilityConfig& cfg) {
  if (test.n < cfg.n_min || control.n < cfg.n_min) return false;
  double stat = welch_statistic(test, control, cfg.var_floor);
  return stat > normal_quantile(1.0 - cfg.level / 2.0);
}

}  // namespace dpv
