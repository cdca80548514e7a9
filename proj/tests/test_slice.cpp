// Apache License, Version 2.0, refer to LICENSE.txt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pkmix/errors.hpp"
#include "pkmix/slice.hpp"

using namespace pkmix;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sided Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

// Monte-Carlo standard error of the mean from batch means.
double batch_se(const std::vector<double>& xs, int batches = 50) {
  const std::size_t len = xs.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += xs[static_cast<std::size_t>(b) * len + i];
    means.push_back(s / static_cast<double>(len));
  }
  return std::sqrt(moments(means).var / batches);
}

std::vector<double> chain(const std::function<double(double)>& lf, double x0,
                          const SliceConfig& cfg, int n, Rng& rng) {
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(n));
  double x = x0;
  for (int i = 0; i < n; ++i) {
    x = slice_step(lf, x, cfg, rng);
    xs.push_back(x);
  }
  return xs;
}

}  // namespace

TEST_CASE("uniform target on [0,1]") {
  SliceConfig cfg;
  cfg.lower_bound = 0.0;
  cfg.upper_bound = 1.0;
  Rng rng(1);
  const auto xs = chain([](double) { return 0.0; }, 0.3, cfg, 10000, rng);
  const auto m = moments(xs);
  CHECK(std::abs(m.mean - 0.5) < 0.02);
  const double se = batch_se(xs);
  CHECK(std::abs(m.mean - 0.5) < 4.0 * se);
  CHECK(std::abs(m.var - 1.0 / 12.0) < 0.01);
  CHECK(ks_statistic(xs, [](double x) { return x; }) < 0.02);
  for (double x : xs) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("standard normal target") {
  SliceConfig cfg;
  Rng rng(7);
  const auto lf = [](double x) { return -0.5 * x * x; };
  const auto xs = chain(lf, 0.0, cfg, 10000, rng);
  // Critical value of the KS statistic at level 0.01 is 1.628 / sqrt(n) for
  // independent draws; thin by 5 so the chain's mild autocorrelation does
  // not inflate it.
  std::vector<double> thinned;
  for (std::size_t i = 0; i < xs.size(); i += 5) thinned.push_back(xs[i]);
  const double crit = 1.628 / std::sqrt(static_cast<double>(thinned.size()));
  CHECK(ks_statistic(thinned, normal_cdf) < crit);
  CHECK(ks_statistic(xs, normal_cdf) < 1.628 / std::sqrt(10000.0));
  const auto m = moments(xs);
  const double se = batch_se(xs);
  CHECK(std::abs(m.mean) < 4.0 * se);
  std::vector<double> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [](double x) { return x * x; });
  CHECK(std::abs(moments(sq).mean - 1.0) < 4.0 * batch_se(sq));
}

TEST_CASE("slice membership on every step") {
  // Bimodal target with hard bounds; a wrapper records the slice level.
  SliceConfig cfg;
  cfg.lower_bound = -3.0;
  cfg.upper_bound = 5.0;
  cfg.initial_width = 0.7;
  cfg.expansion_step = 0.7;
  const auto lf = [](double x) {
    return std::log(std::exp(-2.0 * (x + 1) * (x + 1)) + 0.5 * std::exp(-3.0 * (x - 2.5) * (x - 2.5)));
  };
  Rng rng(3);
  Rng probe(3);
  double x = 0.0;
  for (int i = 0; i < 5000; ++i) {
    // Replay the slice height the step will draw.
    const double y = lf(x) + std::log(uniform01(probe));
    const auto r = slice_step_eval(lf, x, cfg, rng);
    CHECK(r.log_f >= y);
    CHECK(r.log_f == lf(r.x));
    CHECK(r.x >= cfg.lower_bound);
    CHECK(r.x <= cfg.upper_bound);
    x = r.x;
    probe = rng;
  }
}

TEST_CASE("exponential target with lower bound") {
  SliceConfig cfg;
  cfg.lower_bound = 0.0;
  cfg.initial_width = 0.5;
  cfg.expansion_step = 0.5;
  Rng rng(99);
  const auto xs = chain([](double x) { return -2.0 * x; }, 1.0, cfg, 20000, rng);
  const auto m = moments(xs);
  CHECK(std::abs(m.mean - 0.5) < 4.0 * batch_se(xs));
  CHECK(ks_statistic(xs, [](double x) { return 1.0 - std::exp(-2.0 * x); }) < 0.03);
}

TEST_CASE("reproducibility") {
  const auto lf = [](double x) { return -std::abs(x) - 0.1 * x * x; };
  Rng a(42);
  Rng b(42);
  const auto xa = chain(lf, 0.5, {}, 500, a);
  const auto xb = chain(lf, 0.5, {}, 500, b);
  CHECK(xa == xb);
}

TEST_CASE("errors") {
  Rng rng(0);
  const auto lf = [](double x) { return x < 0 ? -INFINITY : -x; };
  CHECK_THROWS_AS(slice_step(lf, -1.0, {}, rng), PreconditionError);
  CHECK_THROWS_AS(slice_step([](double) { return NAN; }, 0.0, {}, rng), PreconditionError);
  SliceConfig bounded;
  bounded.lower_bound = 0.0;
  bounded.upper_bound = 1.0;
  CHECK_THROWS_AS(slice_step(lf, 2.0, bounded, rng), PreconditionError);
  SliceConfig tight;
  tight.max_expansions = 3;
  tight.initial_width = 1e-3;
  tight.expansion_step = 1e-3;
  CHECK_THROWS_AS(slice_step([](double) { return 0.0; }, 0.0, tight, rng), NumericalFailure);
  SliceConfig bad;
  bad.initial_width = 0.0;
  CHECK_THROWS_AS(slice_step(lf, 1.0, bad, rng), DomainError);
  bad = {};
  bad.lower_bound = 2.0;
  bad.upper_bound = 1.0;
  CHECK_THROWS_AS(slice_step(lf, 1.5, bad, rng), DomainError);
}
