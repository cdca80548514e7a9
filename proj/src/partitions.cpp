// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/partitions.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "detail/overloaded.hpp"
#include "pkmix/errors.hpp"

namespace pkmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t mix(std::size_t seed, std::uint64_t v) {
  return seed ^ (std::hash<std::uint64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

struct MemoKey {
  int n;
  int K;
  std::uint64_t sigma_bits;
  std::size_t tilt_hash;
  TiltingFunction tilt;
  QuadratureConfig cfg;
  bool operator==(const MemoKey&) const = default;
};

struct MemoKeyHash {
  std::size_t operator()(const MemoKey& k) const {
    std::size_t h = mix(0, static_cast<std::uint64_t>(k.n));
    h = mix(h, static_cast<std::uint64_t>(k.K));
    h = mix(h, k.sigma_bits);
    h = mix(h, k.tilt_hash);
    h = mix(h, std::bit_cast<std::uint64_t>(k.cfg.rel_tol));
    h = mix(h, std::bit_cast<std::uint64_t>(k.cfg.abs_tol));
    return mix(h, static_cast<std::uint64_t>(k.cfg.max_subdivisions));
  }
};

class Memo {
 public:
  template <class F>
  double get(const MemoKey& key, F&& compute) {
    {
      std::shared_lock lock(mu_);
      auto it = table_.find(key);
      if (it != table_.end()) return it->second;
    }
    const double v = compute();
    std::unique_lock lock(mu_);
    table_.emplace(key, v);
    return v;
  }
  void clear() {
    std::unique_lock lock(mu_);
    table_.clear();
  }

 private:
  std::shared_mutex mu_;
  std::unordered_map<MemoKey, double, MemoKeyHash> table_;
};

Memo& v_memo() {
  static Memo m;
  return m;
}

// K = 0 entries hold log Z_h.
Memo& z_memo() {
  static Memo m;
  return m;
}

MemoKey make_key(int n, int K, StableIndex sigma, const TiltingFunction& f,
                 const QuadratureConfig& cfg) {
  return {n, K, std::bit_cast<std::uint64_t>(sigma.value()), f.hash(), f, cfg};
}

double cached_log_normalizer(StableIndex sigma, const TiltingFunction& f,
                             const QuadratureConfig& cfg) {
  return z_memo().get(make_key(0, 0, sigma, f, cfg),
                      [&] { return log_normalizer(f, sigma, cfg); });
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Power-law tilts c t^{-theta} with their constant log c; the V_{n,K}
// inner integral is then a Beta function.
struct PowerTilt {
  double theta;
  double log_c;
};

std::optional<PowerTilt> power_tilt(const TiltingFunction& f, double s) {
  using R = std::optional<PowerTilt>;
  return std::visit(
      detail::Overloaded{
          [](const tilt::NormalizedStable&) -> R { return PowerTilt{0.0, 0.0}; },
          [](const tilt::GeneralizedGamma&) -> R { return std::nullopt; },
          [&](const tilt::PitmanYor& p) -> R {
            return PowerTilt{p.theta, std::lgamma(p.theta + 1.0) - std::lgamma(p.theta / s + 1.0)};
          },
          [](const tilt::GammaTilted& g) -> R {
            if (g.eta == 0.0) return PowerTilt{g.theta, 0.0};
            return std::nullopt;
          },
      },
      f.variant());
}

// log V_{n,K} for the Pitman-Yor law (theta = 0 is the stable limit).
double log_V_py(int n, int K, double s, double theta) {
  if (theta == 0.0) return (K - 1) * std::log(s) + std::lgamma(K) - std::lgamma(n);
  return K * std::log(s) + std::lgamma(theta) - std::lgamma(theta / s) +
         std::lgamma(theta / s + K) - std::lgamma(theta + n);
}

// Exponential tilts satisfy h(s/r) = h(s) r^theta exp(-c (1/r - 1)) with
// c = rate * s.
struct ExpTilt {
  double theta;
  double rate;
};

ExpTilt exp_tilt(const TiltingFunction& f, double s) {
  return std::visit(
      detail::Overloaded{
          [](const tilt::NormalizedStable&) { return ExpTilt{0.0, 0.0}; },
          [&](const tilt::GeneralizedGamma& g) { return ExpTilt{0.0, std::pow(g.tau, 1.0 / s)}; },
          [](const tilt::PitmanYor& p) { return ExpTilt{p.theta, 0.0}; },
          [](const tilt::GammaTilted& g) { return ExpTilt{g.theta, g.eta}; },
      },
      f.variant());
}

// log int_0^1 r^{a-1} (1-r)^{b-1} h(e^x / r) dr for an exponential tilt.
// With v = c (1/r - 1) it becomes
//   h(s) c^p int_0^inf v^{b-1} (c+v)^{-p-b} e^{-v} dv,  p = a + theta,
// which is smooth in log v for every s.
double log_inner(double x, double a, double b, const TiltingFunction& f, StableIndex sigma,
                 const QuadratureConfig& cfg) {
  const auto et = exp_tilt(f, sigma.value());
  const double log_c = std::log(et.rate) + x;
  const double p = a + et.theta;
  const LogIntegrand g = [&](double lv) {
    if (std::abs(lv) > 700.0) return kNegInf;
    const double v = std::exp(lv);
    const double lcv = lv > log_c ? lv + std::log1p(std::exp(log_c - lv))
                                  : log_c + std::log1p(std::exp(lv - log_c));
    return b * lv - (p + b) * lcv - v;
  };
  const double center = std::clamp(log_c, -30.0, 0.0);
  return log_h_at_log(f, x, sigma) + p * log_c + log_integrate_real_line(g, center, 2.0, cfg);
}

double compute_log_VnK(int n, int K, StableIndex sigma, const TiltingFunction& f,
                       const QuadratureConfig& cfg) {
  const double s = sigma.value();
  const double a = K * s;
  const double b = n - a;
  const double log_const = K * std::log(s) - std::lgamma(b) - cached_log_normalizer(sigma, f, cfg);
  const auto power = power_tilt(f, s);
  // Nested values must be sharper than the outer tolerance or their noise
  // stalls the outer error estimate.
  QuadratureConfig inner = cfg;
  inner.rel_tol = std::max(cfg.rel_tol * 1e-2, 1e-14);
  inner.abs_tol = cfg.abs_tol * 1e-2;

  // Outer integral over x = log s of f_sigma(s) s^{1-a} J(s).
  const LogIntegrand outer = [&](double x) {
    if (std::abs(x) > 700.0) return kNegInf;
    const double ld = log_stable_density(std::exp(x), sigma, inner);
    if (ld == kNegInf) return kNegInf;
    double lj;
    if (power) {
      lj = power->log_c - power->theta * x + log_beta(a + power->theta, b);
    } else {
      lj = log_inner(x, a, b, f, sigma, inner);
    }
    return ld + (1.0 - a) * x + lj;
  };
  const double integral = log_integrate_real_line(outer, 0.0, 2.0, cfg);
  const double v = log_const + integral;
  if (!std::isfinite(v)) throw NumericalFailure("log_VnK: non-finite result");
  return v;
}

double sum_log_weights(const Partition& p, StableIndex sigma) {
  double acc = 0.0;
  for (int m : p.sorted_sizes()) acc += log_gibbs_weight(m, sigma);
  return acc;
}

void require_nonempty(const Partition& p, const char* who) {
  if (p.n() == 0) throw PreconditionError(std::string(who) + ": empty partition");
}

// log V_{n,K} through a closed form when the tilt admits one.
double log_V_auto(int n, int K, StableIndex sigma, const TiltingFunction& f,
                  const QuadratureConfig& cfg) {
  f.validate(sigma);
  if (const auto power = power_tilt(f, sigma.value())) {
    return log_V_py(n, K, sigma.value(), power->theta);
  }
  return log_VnK(n, K, sigma, f, cfg);
}

}  // namespace

Partition::Partition(std::vector<int> assignments) : assignments_(std::move(assignments)) {
  for (int label : assignments_) ++sizes_[label];
}

Partition Partition::from_blocks(const std::vector<std::vector<int>>& blocks) {
  std::size_t n = 0;
  for (const auto& b : blocks) {
    if (b.empty()) throw PreconditionError("Partition: empty block");
    n += b.size();
  }
  std::vector<int> a(n, -1);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (int i : blocks[k]) {
      if (i < 0 || static_cast<std::size_t>(i) >= n || a[static_cast<std::size_t>(i)] != -1) {
        throw PreconditionError("Partition: blocks must cover 0..n-1 exactly once");
      }
      a[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
  }
  return Partition(std::move(a)).canonical();
}

int Partition::size_of(int label) const {
  auto it = sizes_.find(label);
  return it == sizes_.end() ? 0 : it->second;
}

Partition Partition::canonical() const {
  std::map<int, int> relabel;
  std::vector<int> out;
  out.reserve(assignments_.size());
  for (int label : assignments_) {
    auto [it, inserted] = relabel.try_emplace(label, static_cast<int>(relabel.size()));
    out.push_back(it->second);
  }
  return Partition(std::move(out));
}

bool Partition::is_canonical() const {
  int next = 0;
  for (int label : assignments_) {
    if (label == next) {
      ++next;
    } else if (label < 0 || label > next) {
      return false;
    }
  }
  return true;
}

std::vector<std::vector<int>> Partition::blocks() const {
  const Partition c = canonical();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(c.K()));
  for (std::size_t i = 0; i < c.assignments_.size(); ++i) {
    out[static_cast<std::size_t>(c.assignments_[i])].push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> Partition::sorted_sizes() const {
  std::vector<int> s;
  s.reserve(sizes_.size());
  for (const auto& [label, m] : sizes_) s.push_back(m);
  std::sort(s.begin(), s.end());
  return s;
}

double log_gibbs_weight(int m, StableIndex sigma) {
  if (m <= 0) throw DomainError("log_gibbs_weight: m must be positive");
  double acc = 0.0;
  for (int i = 0; i <= m - 2; ++i) acc += std::log(1.0 - sigma.value() + i);
  return acc;
}

double log_VnK(int n, int K, StableIndex sigma, const TiltingFunction& f,
               const QuadratureConfig& cfg) {
  if (n < 1 || K < 1 || K > n) throw DomainError("log_VnK: need 1 <= K <= n");
  f.validate(sigma);
  cfg.validate();
  return v_memo().get(make_key(n, K, sigma, f, cfg),
                      [&] { return compute_log_VnK(n, K, sigma, f, cfg); });
}

double log_eppf(const Partition& p, StableIndex sigma, const TiltingFunction& f,
                const QuadratureConfig& cfg, EppfMethod method) {
  require_nonempty(p, "log_eppf");
  const int n = static_cast<int>(p.n());
  const double lv = method == EppfMethod::Auto ? log_V_auto(n, p.K(), sigma, f, cfg)
                                               : log_VnK(n, p.K(), sigma, f, cfg);
  return lv + sum_log_weights(p, sigma);
}

double log_eppf_py_closed(const Partition& p, StableIndex sigma, double theta) {
  require_nonempty(p, "log_eppf_py_closed");
  if (!(theta > -sigma.value())) throw DomainError("log_eppf_py_closed: need theta > -sigma");
  return log_V_py(static_cast<int>(p.n()), p.K(), sigma.value(), theta) +
         sum_log_weights(p, sigma);
}

double log_eppf_dp_closed(const Partition& p, double theta) {
  require_nonempty(p, "log_eppf_dp_closed");
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw DomainError("log_eppf_dp_closed: theta must be positive");
  }
  double acc = p.K() * std::log(theta) + std::lgamma(theta) -
               std::lgamma(static_cast<double>(p.n()) + theta);
  for (int m : p.sorted_sizes()) acc += std::lgamma(m);
  return acc;
}

double log_eppf_ngg_integral(const Partition& p, StableIndex sigma, double tau,
                             const QuadratureConfig& cfg) {
  require_nonempty(p, "log_eppf_ngg_integral");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("log_eppf_ngg_integral: tau > 0");
  cfg.validate();
  const double s = sigma.value();
  const double a = s;
  const double b = std::pow(tau, 1.0 / s);
  const double n = static_cast<double>(p.n());
  const int K = p.K();

  // psi(u) = (a/sigma) ((u+b)^sigma - b^sigma), kappa(m,u) = a/Gamma(1-sigma)
  // Gamma(m-sigma) (u+b)^{sigma-m}; integrated over x = log u.
  const LogIntegrand integrand = [&](double x) {
    if (std::abs(x) > 700.0) return kNegInf;
    const double u = std::exp(x);
    const double lub = u > b ? x + std::log1p(b / u) : std::log(b) + std::log1p(u / b);
    const double psi = (a / s) * std::pow(b, s) * std::expm1(s * std::log1p(u / b));
    return n * x - psi + (K * s - n) * lub;
  };
  double acc = -std::lgamma(n) + log_integrate_real_line(integrand, std::log(b) , 2.0, cfg);
  for (int m : p.sorted_sizes()) acc += std::log(a) - std::lgamma(1.0 - s) + std::lgamma(m - s);
  if (!std::isfinite(acc)) throw NumericalFailure("log_eppf_ngg_integral: non-finite result");
  return acc;
}

std::vector<Partition> enumerate_partitions(int n) {
  if (n < 1 || n > 10) throw DomainError("enumerate_partitions: n must be in [1, 10]");
  // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[0..i-1]).
  std::vector<Partition> out;
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  std::vector<int> mx(static_cast<std::size_t>(n), 0);
  for (;;) {
    out.emplace_back(a);
    int i = n - 1;
    while (i > 0 && a[static_cast<std::size_t>(i)] > mx[static_cast<std::size_t>(i - 1)]) --i;
    if (i == 0) break;
    ++a[static_cast<std::size_t>(i)];
    for (int j = i; j < n; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (j > i) a[ju] = 0;
      mx[ju] = std::max(mx[ju - 1], a[ju]);
    }
  }
  return out;
}

Partition sample_prior_partition(int n, StableIndex sigma, const TiltingFunction& f, Rng& rng,
                                 const QuadratureConfig& cfg) {
  if (n < 1) throw DomainError("sample_prior_partition: n must be positive");
  f.validate(sigma);
  std::vector<int> assign{0};
  std::vector<int> sizes{1};
  std::vector<double> logw;
  for (int m = 1; m < n; ++m) {
    const int K = static_cast<int>(sizes.size());
    const double lv = log_V_auto(m, K, sigma, f, cfg);
    const double stay = log_V_auto(m + 1, K, sigma, f, cfg) - lv;
    const double open = log_V_auto(m + 1, K + 1, sigma, f, cfg) - lv;
    logw.clear();
    for (int c : sizes) logw.push_back(stay + std::log(c - sigma.value()));
    logw.push_back(open);
    const auto k = sample_log_categorical(logw, rng);
    if (k == sizes.size()) sizes.push_back(0);
    ++sizes[k];
    assign.push_back(static_cast<int>(k));
  }
  return Partition(std::move(assign));
}

void clear_partition_cache() {
  v_memo().clear();
  z_memo().clear();
}

}  // namespace pkmix
