// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "pkmix/errors.hpp"

namespace pkmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// QUADPACK qk21 abscissae and weights; odd entries of kXgk are the 10-point
// Gauss nodes.
constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600983305419, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

// Thrown internally when the shifted integrand overflows; the driver
// restarts with a larger shift.
struct ShiftTooSmall {
  double new_shift;
};

class ShiftedRule {
 public:
  ShiftedRule(const LogIntegrand& log_f, double shift) : log_f_(log_f), shift_(shift) {}

  double eval(double x) const {
    const double lf = log_f_(x);
    if (std::isnan(lf)) throw NumericalFailure("quadrature: integrand returned NaN");
    if (lf == kNegInf) return 0.0;
    const double d = lf - shift_;
    if (d > 600.0) throw ShiftTooSmall{lf};
    return std::exp(d);
  }

  Segment apply(double a, double b) const {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double kronrod = kWgk[10] * eval(center);
    double gauss = 0.0;
    for (int j = 0; j < 10; ++j) {
      const double dx = half * kXgk[j];
      const double fsum = eval(center - dx) + eval(center + dx);
      kronrod += kWgk[j] * fsum;
      if (j % 2 == 1) gauss += kWg[j / 2] * fsum;
    }
    kronrod *= half;
    gauss *= half;
    return {a, b, kronrod, std::abs(kronrod - gauss)};
  }

 private:
  const LogIntegrand& log_f_;
  double shift_;
};

double scan_max(const LogIntegrand& log_f, const std::vector<double>& edges) {
  double best = kNegInf;
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    const double a = edges[s];
    const double b = edges[s + 1];
    constexpr int kScan = 16;
    for (int i = 0; i < kScan; ++i) {
      const double x = a + (b - a) * (i + 0.5) / kScan;
      const double v = log_f(x);
      if (std::isnan(v)) throw NumericalFailure("quadrature: integrand returned NaN");
      best = std::max(best, v);
    }
  }
  return best;
}

double integrate_shifted(const LogIntegrand& log_f, const std::vector<double>& edges,
                         double shift, const QuadratureConfig& cfg) {
  const ShiftedRule rule(log_f, shift);
  std::priority_queue<Segment> heap;
  double total = 0.0;
  double total_err = 0.0;
  for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
    Segment seg = rule.apply(edges[s], edges[s + 1]);
    total += seg.value;
    total_err += seg.error;
    heap.push(seg);
  }
  int segments = static_cast<int>(heap.size());
  while (total_err > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total))) {
    if (segments >= cfg.max_subdivisions) {
      const Segment& w = heap.top();
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "quadrature: tolerance not met within %d subdivisions "
                    "(worst [%.6g, %.6g], relative error %.3g)",
                    cfg.max_subdivisions, w.a, w.b, total_err / std::abs(total));
      throw NumericalFailure(msg);
    }
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw NumericalFailure("quadrature: interval collapsed to machine precision");
    }
    Segment left = rule.apply(worst.a, mid);
    Segment right = rule.apply(mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++segments;
  }
  // Recompute from the leaves to shed accumulated cancellation error.
  total = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    heap.pop();
  }
  return total;
}

}  // namespace

void QuadratureConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || max_subdivisions < 1) {
    throw DomainError("QuadratureConfig: tolerances must be positive and max_subdivisions >= 1");
  }
}

double log_integrate(const LogIntegrand& log_f, double a, double b,
                     const QuadratureConfig& cfg, std::span<const double> breakpoints) {
  cfg.validate();
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("log_integrate: need finite a < b");
  }
  std::vector<double> edges{a};
  std::vector<double> interior(breakpoints.begin(), breakpoints.end());
  std::sort(interior.begin(), interior.end());
  for (double x : interior) {
    if (x > edges.back() && x < b) edges.push_back(x);
  }
  edges.push_back(b);

  double shift = scan_max(log_f, edges);
  if (shift == kNegInf) return kNegInf;
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      const double value = integrate_shifted(log_f, edges, shift, cfg);
      if (value <= 0.0) return kNegInf;
      return std::log(value) + shift;
    } catch (const ShiftTooSmall& s) {
      shift = s.new_shift;
    }
  }
  throw NumericalFailure("log_integrate: could not stabilize the exponential shift");
}

double log_integrate_upper(const LogIntegrand& log_f, double a, double scale,
                           const QuadratureConfig& cfg) {
  if (!(scale > 0.0)) throw DomainError("log_integrate_upper: scale must be positive");
  const double log_scale = std::log(scale);
  const LogIntegrand mapped = [&](double u) {
    const double x = a + scale * u / (1.0 - u);
    if (!std::isfinite(x)) return kNegInf;
    const double lf = log_f(x);
    if (lf == kNegInf) return kNegInf;
    return lf + log_scale - 2.0 * std::log1p(-u);
  };
  return log_integrate(mapped, 0.0, 1.0, cfg);
}

double log_integrate_real_line(const LogIntegrand& log_f, double center, double scale,
                               const QuadratureConfig& cfg) {
  const LogIntegrand reflected = [&](double x) { return log_f(2.0 * center - x); };
  const double upper = log_integrate_upper(log_f, center, scale, cfg);
  const double lower = log_integrate_upper(reflected, center, scale, cfg);
  return log_add_exp(upper, lower);
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace pkmix
