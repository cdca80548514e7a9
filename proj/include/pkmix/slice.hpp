// Apache License, Version 2.0, refer to LICENSE.txt

// Univariate slice sampling with stepping out and shrinkage.

#pragma once

#include <functional>
#include <limits>

#include "pkmix/random.hpp"

namespace pkmix {

struct SliceConfig {
  double initial_width = 1.0;  // L
  double expansion_step = 1.0;  // E
  int max_expansions = 1000;
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();

  void validate() const;
  bool operator==(const SliceConfig&) const = default;
};

struct SliceResult {
  double x;
  double log_f;  // log_f(x), saved for the caller
};

// One transition leaving exp(log_f) restricted to the bounds invariant.
// Throws PreconditionError when log_f(x0) is not finite or x0 is out of
// bounds, NumericalFailure when max_expansions is exceeded.
SliceResult slice_step_eval(const std::function<double(double)>& log_f, double x0,
                            const SliceConfig& cfg, Rng& rng);

inline double slice_step(const std::function<double(double)>& log_f, double x0,
                         const SliceConfig& cfg, Rng& rng) {
  return slice_step_eval(log_f, x0, cfg, rng).x;
}

}  // namespace pkmix
