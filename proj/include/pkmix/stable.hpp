// Apache License, Version 2.0, refer to LICENSE.txt

// Numerics for the positive sigma-stable law with Laplace transform
// E[exp(-lambda T)] = exp(-lambda^sigma).  Every density routine returns a
// natural-log value.

#pragma once

#include "pkmix/quadrature.hpp"

namespace pkmix {

// Stability index sigma, strictly inside (0, 1).
class StableIndex {
 public:
  explicit StableIndex(double sigma);
  double value() const { return sigma_; }
  operator double() const { return sigma_; }

 private:
  double sigma_;
};

// Zolotarev's function
//   A(z) = [sin(sz)/sin z]^{1/(1-s)} * sin((1-s)z)/sin(sz),  z in (0, pi).
// Within 1e-10 of zero the analytic limit s^{s/(1-s)} (1-s) is returned.
double zolotarev_log_A(double z, StableIndex sigma);
double zolotarev_A(double z, StableIndex sigma);

struct SeriesOptions {
  int max_terms = 200;
  double term_tol = 1e-12;
  // Largest tolerated ratio between the biggest term and the final sum;
  // beyond it the alternating series has lost too many digits.
  double max_cancellation = 1e4;
};

// log f_sigma(t) from the alternating series
//   (1/pi) sum_j (-1)^{j+1}/j! sin(pi s j) Gamma(s j + 1) t^{-s j - 1}.
// Throws NumericalFailure when the terms have not decayed below
// term_tol * |partial sum| within max_terms (or cancellation is excessive).
double log_stable_density_series(double t, StableIndex sigma, const SeriesOptions& opt = {});

// True when the series above would succeed at t.
bool stable_series_converges(double t, StableIndex sigma, const SeriesOptions& opt = {});

// log f_sigma(t) by adaptive quadrature of Zolotarev's integral
// representation over z in (eps, pi - eps), eps = 1e-12.
double log_stable_density_quadrature(double t, StableIndex sigma,
                                     const QuadratureConfig& cfg = {});

// Smallest t at which 200 series terms reach 1e-12 decay (cached per sigma).
double stable_series_threshold(StableIndex sigma);

// Series for t >= stable_series_threshold(sigma), quadrature below it.
double log_stable_density(double t, StableIndex sigma, const QuadratureConfig& cfg = {});

// Closed form of the sigma = 1/2 density: t^{-3/2} e^{-1/(4t)} / (2 sqrt(pi)).
double half_stable_density(double t);

}  // namespace pkmix
