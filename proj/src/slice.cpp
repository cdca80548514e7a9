// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/slice.hpp"

#include <cmath>
#include <string>

#include "pkmix/errors.hpp"

namespace pkmix {

void SliceConfig::validate() const {
  if (!(initial_width > 0.0) || !(expansion_step > 0.0) || !std::isfinite(initial_width) ||
      !std::isfinite(expansion_step)) {
    throw DomainError("SliceConfig: L and E must be positive and finite");
  }
  if (max_expansions < 0) throw DomainError("SliceConfig: max_expansions must be >= 0");
  if (!(lower_bound < upper_bound)) throw DomainError("SliceConfig: need lower_bound < upper_bound");
}

SliceResult slice_step_eval(const std::function<double(double)>& log_f, double x0,
                            const SliceConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!(x0 >= cfg.lower_bound && x0 <= cfg.upper_bound)) {
    throw PreconditionError("slice_step: x0 outside the bounds");
  }
  const double f0 = log_f(x0);
  if (!std::isfinite(f0)) {
    throw PreconditionError("slice_step: log_f(x0) must be finite, got " + std::to_string(f0));
  }
  const double y = f0 + std::log(uniform01(rng));

  // Place [a, b] of width L at random around x0, then step out by E.  A side
  // that crosses a bound is clipped there; outside the bounds the target is
  // zero, so this is the same interval intersected with the support.
  const double l = cfg.initial_width * uniform01(rng);
  double a = x0 - l;
  double b = a + cfg.initial_width;
  bool a_open = true;
  bool b_open = true;
  if (a <= cfg.lower_bound) {
    a = cfg.lower_bound;
    a_open = false;
  }
  if (b >= cfg.upper_bound) {
    b = cfg.upper_bound;
    b_open = false;
  }
  int expansions = 0;
  for (;;) {
    const bool grow_a = a_open && log_f(a) >= y;
    const bool grow_b = b_open && log_f(b) >= y;
    if (!grow_a && !grow_b) break;
    if (++expansions > cfg.max_expansions) {
      throw NumericalFailure("slice_step: exceeded max_expansions");
    }
    if (grow_a) {
      a -= cfg.expansion_step;
      if (a <= cfg.lower_bound) {
        a = cfg.lower_bound;
        a_open = false;
      }
    } else {
      a_open = false;
    }
    if (grow_b) {
      b += cfg.expansion_step;
      if (b >= cfg.upper_bound) {
        b = cfg.upper_bound;
        b_open = false;
      }
    } else {
      b_open = false;
    }
  }

  // Shrinkage toward x0.
  for (;;) {
    const double w = a + (b - a) * uniform01(rng);
    if (w > cfg.lower_bound && w < cfg.upper_bound) {
      const double fw = log_f(w);
      if (fw >= y) return {w, fw};
    }
    if (w < x0) {
      a = w;
    } else {
      b = w;
    }
    if (!(b - a > 0.0)) return {x0, f0};
  }
}

}  // namespace pkmix
