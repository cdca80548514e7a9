// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <span>

namespace pkmix {

// Tolerances for the adaptive Gauss-Kronrod driver.  abs_tol is measured
// against the max-normalized integrand (peak value 1), so it is scale free.
struct QuadratureConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  int max_subdivisions = 200;

  void validate() const;
  bool operator==(const QuadratureConfig&) const = default;
};

// A function returning log f(x).  -inf is a valid return value.
using LogIntegrand = std::function<double(double)>;

// log of the integral of exp(log_f) over [a, b], computed by globally
// adaptive 21-point Gauss-Kronrod on the max-shifted integrand.  Optional
// interior breakpoints seed the initial partition of [a, b].  Returns -inf
// when the integrand vanishes everywhere it is sampled.  Throws
// NumericalFailure when the tolerance is not met within max_subdivisions.
double log_integrate(const LogIntegrand& log_f, double a, double b,
                     const QuadratureConfig& cfg,
                     std::span<const double> breakpoints = {});

// Same over [a, +inf) using x = a + scale * u / (1 - u).
double log_integrate_upper(const LogIntegrand& log_f, double a, double scale,
                           const QuadratureConfig& cfg);

// Same over (-inf, +inf), split at `center`.
double log_integrate_real_line(const LogIntegrand& log_f, double center,
                               double scale, const QuadratureConfig& cfg);

// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

// log sum exp over a span.
double log_sum_exp(std::span<const double> values);

}  // namespace pkmix
