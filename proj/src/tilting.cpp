// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/tilting.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>

#include "detail/overloaded.hpp"
#include "pkmix/errors.hpp"

namespace pkmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using detail::Overloaded;

std::size_t mix(std::size_t seed, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  return seed ^ (std::hash<std::uint64_t>{}(bits) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace

TiltingFunction::TiltingFunction(Variant v) : v_(std::move(v)) {
  std::visit(Overloaded{
                 [](const tilt::NormalizedStable&) {},
                 [](const tilt::GeneralizedGamma& g) {
                   if (!(g.tau > 0.0)) throw DomainError("NGG tilt: tau must be positive");
                 },
                 [](const tilt::PitmanYor& p) {
                   if (!std::isfinite(p.theta) || p.theta <= -1.0) {
                     throw DomainError("PY tilt: theta must exceed -1");
                   }
                 },
                 [](const tilt::GammaTilted& g) {
                   if (!std::isfinite(g.theta) || !(g.eta >= 0.0)) {
                     throw DomainError("GT tilt: need finite theta and eta >= 0");
                   }
                 },
             },
             v_);
}

std::string TiltingFunction::kind() const {
  return std::visit(Overloaded{
                        [](const tilt::NormalizedStable&) { return std::string("ns"); },
                        [](const tilt::GeneralizedGamma&) { return std::string("ngg"); },
                        [](const tilt::PitmanYor&) { return std::string("py"); },
                        [](const tilt::GammaTilted&) { return std::string("gt"); },
                    },
                    v_);
}

std::string TiltingFunction::describe() const {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const tilt::NormalizedStable&) { os << "NS"; },
                 [&](const tilt::GeneralizedGamma& g) { os << "NGG(tau=" << g.tau << ")"; },
                 [&](const tilt::PitmanYor& p) { os << "PY(theta=" << p.theta << ")"; },
                 [&](const tilt::GammaTilted& g) {
                   os << "GT(theta=" << g.theta << ", eta=" << g.eta << ")";
                 },
             },
             v_);
  return os.str();
}

void TiltingFunction::validate(StableIndex sigma) const {
  const double s = sigma.value();
  if (const auto* p = std::get_if<tilt::PitmanYor>(&v_)) {
    // theta = -sigma makes Gamma(theta/sigma + 1) infinite and h identically 0.
    if (!(p->theta > -s)) {
      throw DomainError("PY tilt: theta must exceed -sigma");
    }
  }
  if (const auto* g = std::get_if<tilt::GammaTilted>(&v_)) {
    if (g->eta == 0.0 && !(g->theta > -s)) {
      throw DomainError("GT tilt: eta = 0 requires theta > -sigma");
    }
  }
}

std::size_t TiltingFunction::hash() const {
  std::size_t seed = v_.index();
  std::visit(Overloaded{
                 [](const tilt::NormalizedStable&) {},
                 [&](const tilt::GeneralizedGamma& g) { seed = mix(seed, g.tau); },
                 [&](const tilt::PitmanYor& p) { seed = mix(seed, p.theta); },
                 [&](const tilt::GammaTilted& g) { seed = mix(mix(seed, g.theta), g.eta); },
             },
             v_);
  return seed;
}

namespace {

// t and log_t describe the same point; whichever is exact is used, so that
// GT(0, eta) reproduces -eta t bit-for-bit and huge log_t never overflows.
double log_h_impl(const TiltingFunction& f, double t, double log_t, StableIndex sigma) {
  f.validate(sigma);
  const double s = sigma.value();
  return std::visit(
      Overloaded{
          [](const tilt::NormalizedStable&) { return 0.0; },
          [&](const tilt::GeneralizedGamma& g) {
            return g.tau - std::exp(std::log(g.tau) / s + log_t);
          },
          [&](const tilt::PitmanYor& p) {
            return std::lgamma(p.theta + 1.0) - std::lgamma(p.theta / s + 1.0) - p.theta * log_t;
          },
          [&](const tilt::GammaTilted& g) {
            double v = g.theta == 0.0 ? 0.0 : -g.theta * log_t;
            if (g.eta > 0.0) v -= g.eta * t;
            return v;
          },
      },
      f.variant());
}

}  // namespace

double log_h_at_log(const TiltingFunction& f, double log_t, StableIndex sigma) {
  return log_h_impl(f, std::exp(log_t), log_t, sigma);
}

double log_h(const TiltingFunction& f, double t, StableIndex sigma) {
  if (!(t > 0.0)) throw DomainError("log_h: t must be positive");
  return log_h_impl(f, t, std::log(t), sigma);
}

double log_normalizer(const TiltingFunction& f, StableIndex sigma, const QuadratureConfig& cfg) {
  f.validate(sigma);
  if (std::holds_alternative<tilt::NormalizedStable>(f.variant())) return 0.0;
  // Integrate over x = log t: h(e^x) f_sigma(e^x) e^x.
  const LogIntegrand integrand = [&](double x) {
    if (x > 700.0 || x < -700.0) return kNegInf;
    const double lh = log_h_at_log(f, x, sigma);
    if (lh == kNegInf) return kNegInf;
    return lh + log_stable_density(std::exp(x), sigma, cfg) + x;
  };
  const double value = log_integrate_real_line(integrand, 0.0, 2.0, cfg);
  if (!std::isfinite(value)) {
    throw NumericalFailure("log_normalizer: integral is zero or infinite for " + f.describe());
  }
  return value;
}

}  // namespace pkmix
