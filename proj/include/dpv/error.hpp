#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dpv {

enum class errc {
  missing_column,
  unparsable_row,
  empty_arm,
  non_finite_metric,
  empty_split,
  insufficient_data,
  domain_error,
  zero_projected_gradient,
  rank_deficient,
  initialization_failed,
  dimension_mismatch,
  too_few_instances,
  config_invalid,
  io_error,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, std::string what)
      : std::runtime_error(std::move(what)), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace dpv
