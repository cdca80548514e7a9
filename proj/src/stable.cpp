// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/stable.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "pkmix/errors.hpp"

namespace pkmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEndpoint = 1e-12;
constexpr double kLaplaceSwitch = 1e8;

void require_positive(double t, const char* who) {
  if (!(t > 0.0) || std::isnan(t)) {
    throw DomainError(std::string(who) + ": t must be positive, got " + std::to_string(t));
  }
}

struct SeriesSum {
  double sum = 0.0;
  double largest = 0.0;
  int terms = 0;
  bool decayed = false;
};

SeriesSum sum_series(double t, double s, const SeriesOptions& opt) {
  SeriesSum out;
  const double log_t = std::log(t);
  double previous_bound = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= opt.max_terms; ++j) {
    const double log_bound =
        std::lgamma(s * j + 1.0) - std::lgamma(j + 1.0) - (s * j + 1.0) * log_t;
    const double bound = std::exp(log_bound) / std::numbers::pi;
    const double sign = (j % 2 == 1) ? 1.0 : -1.0;
    const double term = sign * std::sin(std::numbers::pi * s * j) * bound;
    out.sum += term;
    out.largest = std::max(out.largest, bound);
    out.terms = j;
    // sin(pi s j) can vanish for individual j, so decay is judged on the
    // magnitude bound and only once the bounds are past their peak.
    if (bound < previous_bound && bound < opt.term_tol * std::abs(out.sum)) {
      out.decayed = true;
      break;
    }
    previous_bound = bound;
  }
  return out;
}

bool series_ok(const SeriesSum& r, const SeriesOptions& opt) {
  return r.decayed && r.sum > 0.0 && r.largest <= opt.max_cancellation * r.sum;
}

}  // namespace

StableIndex::StableIndex(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw DomainError("StableIndex: sigma must lie in (0, 1), got " + std::to_string(sigma));
  }
}

double zolotarev_log_A(double z, StableIndex sigma) {
  const double s = sigma.value();
  if (!(z > 0.0 && z < std::numbers::pi)) {
    throw DomainError("zolotarev_A: z must lie in (0, pi), got " + std::to_string(z));
  }
  if (z < 1e-10) {
    return (s / (1.0 - s)) * std::log(s) + std::log1p(-s);
  }
  const double log_sin_sz = std::log(std::sin(s * z));
  return (log_sin_sz - std::log(std::sin(z))) / (1.0 - s) +
         std::log(std::sin((1.0 - s) * z)) - log_sin_sz;
}

double zolotarev_A(double z, StableIndex sigma) { return std::exp(zolotarev_log_A(z, sigma)); }

bool stable_series_converges(double t, StableIndex sigma, const SeriesOptions& opt) {
  require_positive(t, "stable_series_converges");
  return series_ok(sum_series(t, sigma.value(), opt), opt);
}

double log_stable_density_series(double t, StableIndex sigma, const SeriesOptions& opt) {
  require_positive(t, "log_stable_density_series");
  const SeriesSum r = sum_series(t, sigma.value(), opt);
  if (!series_ok(r, opt)) {
    throw NumericalFailure("log_stable_density_series: no convergence at t=" +
                           std::to_string(t) + " after " + std::to_string(r.terms) + " terms");
  }
  return std::log(r.sum);
}

double log_stable_density_quadrature(double t, StableIndex sigma, const QuadratureConfig& cfg) {
  require_positive(t, "log_stable_density_quadrature");
  const double s = sigma.value();
  const double log_t = std::log(t);
  // x = t^{-s/(1-s)}; the integrand in z is A(z) exp(-x A(z)).
  const double log_x = -(s / (1.0 - s)) * log_t;
  const double x = std::exp(log_x);
  const double log_const =
      std::log(s / (1.0 - s)) - std::log(std::numbers::pi) - log_t / (1.0 - s);

  const LogIntegrand integrand = [&](double z) {
    const double log_a = zolotarev_log_A(z, sigma);
    if (x == std::numeric_limits<double>::infinity()) return kNegInf;
    return log_a - x * std::exp(log_a);
  };

  // The integrand peaks where A(z) = 1/x (or at z = 0 when A(0) > 1/x).
  // Breakpoints at multiples of the curvature width around the peak keep a
  // narrow mode from falling between Kronrod nodes.
  const double lo = kEndpoint;
  const double hi = std::numbers::pi - kEndpoint;
  double peak = lo;
  double curvature = 0.0;
  if (zolotarev_log_A(lo, sigma) < -log_x) {
    double a = lo;
    double b = hi;
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
      const double m = 0.5 * (a + b);
      if (zolotarev_log_A(m, sigma) < -log_x) a = m; else b = m;
    }
    peak = 0.5 * (a + b);
    // At the interior mode x A = 1, so g'' = -(d log A / dz)^2.
    const double h = 1e-6 * std::min(peak, std::numbers::pi - peak);
    const double slope =
        (zolotarev_log_A(peak + h, sigma) - zolotarev_log_A(peak - h, sigma)) / (2.0 * h);
    curvature = slope * slope;
  } else {
    // Boundary mode: g''(0) = (log A)''(0) (1 - x A(0)).
    const double h = 1e-3;
    const double l0 = zolotarev_log_A(1e-11, sigma);
    const double second = 2.0 * (zolotarev_log_A(h, sigma) - l0) / (h * h);
    const double x_a0 = x * std::exp(l0);
    curvature = std::abs(second * (1.0 - x_a0));
    if (x_a0 > kLaplaceSwitch) {
      // Far left tail: rounding in x A(z) swamps any quadrature, while the
      // half-Gaussian Laplace approximation is accurate to O(1 / (x A(0)))
      // on the integral, i.e. far below 1e-12 relative on log f.
      return log_const + l0 - x_a0 + 0.5 * std::log(std::numbers::pi / (2.0 * curvature));
    }
  }
  const double width = curvature > 0.0 ? 1.0 / std::sqrt(curvature) : 1.0;
  std::array<double, 13> breaks{};
  std::size_t nb = 0;
  if (peak > lo) breaks[nb++] = peak;
  for (double mult : {1.0, 4.0, 16.0, 64.0, 256.0, 1024.0}) {
    const double off = mult * width;
    if (peak + off < hi) breaks[nb++] = peak + off;
    if (peak - off > lo) breaks[nb++] = peak - off;
  }
  // Accuracy is owed on log f, so the integral's relative tolerance scales
  // with |log f|; deep in the left tail x A(z) is ~1e13 and its rounding
  // alone exceeds any fixed relative tolerance.
  const double log_peak = log_const + integrand(std::max(peak, 2.0 * lo));
  QuadratureConfig inner = cfg;
  inner.rel_tol = std::min(0.1, cfg.rel_tol * std::max(1.0, std::abs(log_peak)));
  const double log_integral =
      log_integrate(integrand, lo, hi, inner, std::span<const double>(breaks.data(), nb));
  if (log_integral == kNegInf) return kNegInf;
  return log_const + log_integral;
}

double stable_series_threshold(StableIndex sigma) {
  static std::mutex mutex;
  static std::map<std::uint64_t, double> cache;
  const auto key = std::bit_cast<std::uint64_t>(sigma.value());
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const SeriesOptions opt{200, 1e-12, 1e4};
  // Convergence is monotone in t: larger t means faster-decaying terms.
  double lo = -30.0;
  double hi = 30.0;
  if (!series_ok(sum_series(std::exp(hi), sigma.value(), opt), opt)) {
    throw NumericalFailure("stable_series_threshold: series unusable even at large t");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (series_ok(sum_series(std::exp(mid), sigma.value(), opt), opt)) hi = mid; else lo = mid;
  }
  const double threshold = std::exp(hi);
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, threshold);
  return threshold;
}

double log_stable_density(double t, StableIndex sigma, const QuadratureConfig& cfg) {
  require_positive(t, "log_stable_density");
  if (t >= stable_series_threshold(sigma)) {
    const SeriesSum r = sum_series(t, sigma.value(), SeriesOptions{});
    if (series_ok(r, SeriesOptions{})) return std::log(r.sum);
  }
  return log_stable_density_quadrature(t, sigma, cfg);
}

double half_stable_density(double t) {
  require_positive(t, "half_stable_density");
  return std::exp(-1.5 * std::log(t) - 0.25 / t) / (2.0 * std::sqrt(std::numbers::pi));
}

}  // namespace pkmix
