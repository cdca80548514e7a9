// Apache License, Version 2.0, refer to LICENSE.txt

// Tilting functions h(t) selecting a member of the sigma-stable
// Poisson-Kingman family.  The mixing law of the total mass is
// gamma(dt) = h(t) f_sigma(t) dt / Z_h.

#pragma once

#include <string>
#include <variant>

#include "pkmix/quadrature.hpp"
#include "pkmix/stable.hpp"

namespace pkmix {

namespace tilt {
// Normalized stable: h = 1.
struct NormalizedStable {
  bool operator==(const NormalizedStable&) const = default;
};
// Normalized generalized gamma: h = exp(tau - tau^{1/sigma} t).
struct GeneralizedGamma {
  double tau = 1.0;
  bool operator==(const GeneralizedGamma&) const = default;
};
// Pitman-Yor: h = Gamma(theta+1)/Gamma(theta/sigma+1) t^{-theta}.
struct PitmanYor {
  double theta = 0.5;
  bool operator==(const PitmanYor&) const = default;
};
// Gamma tilted: h = t^{-theta} exp(-eta t).
struct GammaTilted {
  double theta = 1.0;
  double eta = 1.0;
  bool operator==(const GammaTilted&) const = default;
};
}  // namespace tilt

class TiltingFunction {
 public:
  using Variant = std::variant<tilt::NormalizedStable, tilt::GeneralizedGamma, tilt::PitmanYor,
                               tilt::GammaTilted>;

  TiltingFunction() = default;
  TiltingFunction(Variant v);  // NOLINT: implicit from a variant member

  static TiltingFunction ns() { return {tilt::NormalizedStable{}}; }
  static TiltingFunction ngg(double tau) { return {tilt::GeneralizedGamma{tau}}; }
  static TiltingFunction py(double theta) { return {tilt::PitmanYor{theta}}; }
  static TiltingFunction gt(double theta, double eta) { return {tilt::GammaTilted{theta, eta}}; }

  const Variant& variant() const { return v_; }
  // "ns", "ngg", "py" or "gt".
  std::string kind() const;
  std::string describe() const;

  // Throws DomainError when the hyperparameters are incompatible with sigma.
  void validate(StableIndex sigma) const;

  // Stable hash of the variant and its hyperparameters (memo keys).
  std::size_t hash() const;

  bool operator==(const TiltingFunction&) const = default;

 private:
  Variant v_{tilt::NormalizedStable{}};
};

// log h(t).
double log_h(const TiltingFunction& f, double t, StableIndex sigma);

// log h(exp(log_t)); never exponentiates the argument before it is needed
// so that huge or tiny t do not overflow.
double log_h_at_log(const TiltingFunction& f, double log_t, StableIndex sigma);

// log of Z_h = int_0^inf h(t) f_sigma(t) dt.  Exactly 0 for NS; quadrature
// otherwise.  Throws NumericalFailure when the integral does not converge.
double log_normalizer(const TiltingFunction& f, StableIndex sigma,
                      const QuadratureConfig& cfg = {});

}  // namespace pkmix
