// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/sampler.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pkmix/errors.hpp"
#include "pkmix/stable.hpp"

namespace pkmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

// log of r^{-s/(1-s)} e^{-w} A(z).
double log_rate_term(double log_A, const AuxState& a) {
  const double s = a.sigma;
  return -(s / (1.0 - s)) * std::log(a.r) - a.w + log_A;
}

double exp_or_inf(double x) { return x > 709.0 ? std::numeric_limits<double>::infinity() : std::exp(x); }

void check_open(double v, double lo, double hi, const char* what) {
  if (!(v > lo && v < hi)) throw DomainError(std::string(what) + " outside its support");
}

double clamp_open(double v, double lo, double hi) {
  return std::min(std::max(v, lo + kAuxEps), hi - kAuxEps);
}

double logistic(double u) { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

}  // namespace

double log_cond_z(double z, const AuxState& aux) {
  check_open(z, 0.0, kPi, "z");
  const double la = zolotarev_log_A(z, StableIndex(aux.sigma));
  return la - exp_or_inf(log_rate_term(la, aux));
}

double log_cond_r(double r, const AuxState& aux, int n, int K) {
  check_open(r, 0.0, 1.0, "r");
  AuxState a = aux;
  a.r = r;
  const double s = aux.sigma;
  const double la = zolotarev_log_A(aux.z, StableIndex(s));
  return (n - 1.0 - K * s) * std::log1p(-r) - std::log(r) / (1.0 - s) -
         exp_or_inf(log_rate_term(la, a));
}

double log_cond_w(double w, const AuxState& aux, int K, const TiltingFunction& f) {
  if (!std::isfinite(w)) throw DomainError("w must be finite");
  AuxState a = aux;
  a.w = w;
  const StableIndex s(aux.sigma);
  const double la = zolotarev_log_A(aux.z, s);
  const double lh = log_h_at_log(f, (1.0 - s) / s * w, s);
  return -w * (1.0 + (1.0 - s) * K) + lh - exp_or_inf(log_rate_term(la, a));
}

double log_joint_aux(const AuxState& aux, int n, int K, const TiltingFunction& f) {
  const StableIndex s(aux.sigma);
  check_open(aux.r, 0.0, 1.0, "r");
  check_open(aux.z, 0.0, kPi, "z");
  const double la = zolotarev_log_A(aux.z, s);
  return -aux.w * (1.0 + (1.0 - s) * K) + (n - 1.0 - K * s) * std::log1p(-aux.r) -
         std::log(aux.r) / (1.0 - s) + log_h_at_log(f, (1.0 - s) / s * aux.w, s) + la -
         exp_or_inf(log_rate_term(la, aux));
}

double log_tilt_normalizer(const TiltingFunction& f, StableIndex sigma,
                           const QuadratureConfig& cfg) {
  f.validate(sigma);
  if (const auto* g = std::get_if<tilt::GammaTilted>(&f.variant())) {
    // E[T^{-theta}] = Gamma(1 + theta/s)/Gamma(1 + theta); E[e^{-eta T}] = e^{-eta^s}.
    if (g->eta == 0.0) return std::lgamma(1.0 + g->theta / sigma) - std::lgamma(1.0 + g->theta);
    if (g->theta == 0.0) return -std::pow(g->eta, sigma.value());
    return log_normalizer(f, sigma, cfg);
  }
  return 0.0;
}

double log_joint(const AuxState& aux, const std::vector<int>& cluster_sizes,
                 const TiltingFunction& f, const QuadratureConfig& cfg) {
  const StableIndex s(aux.sigma);
  int n = 0;
  double part = 0.0;
  for (int m : cluster_sizes) {
    n += m;
    part += log_gibbs_weight(m, s);
  }
  const int K = static_cast<int>(cluster_sizes.size());
  part += K * std::log(aux.sigma) - std::lgamma(n - aux.sigma * K);
  return log_joint_aux(aux, n, K, f) + part - log_tilt_normalizer(f, s, cfg) - std::log(kPi);
}

double log_new_cluster_weight(const AuxState& aux, int n, int K, NewClusterForm form) {
  const double s = aux.sigma;
  const double lr = form == NewClusterForm::OneMinusR ? std::log1p(-aux.r) : std::log(aux.r);
  return std::log(s) + (s - 1.0) * aux.w - s * lr + std::lgamma(n - s * K) -
         std::lgamma(n - s * (K + 1));
}

double log_sigma_target(double u, const AuxState& aux, const std::vector<int>& cluster_sizes,
                        const TiltingFunction& f, const SigmaPrior& prior,
                        const QuadratureConfig& cfg) {
  const double s = logistic(u);
  if (!(s > 1e-9 && s < 1.0 - 1e-9)) return kNegInf;
  const double base = prior.a * std::log(s) + prior.b * std::log1p(-s);
  if (cluster_sizes.empty()) return base;
  AuxState a = aux;
  a.sigma = s;
  try {
    f.validate(StableIndex(s));
  } catch (const DomainError&) {
    return kNegInf;
  }
  return base + log_joint(a, cluster_sizes, f, cfg);
}

void SamplerConfig::validate(const LikelihoodModel& m) const {
  if (M < 1) throw DomainError("M must be at least 1");
  if (marginalize && !m.is_conjugate()) {
    throw UnsupportedOperation("marginalized sampling needs a conjugate model");
  }
  if (!(sigma_prior.a > 0.0) || !(sigma_prior.b > 0.0)) {
    throw DomainError("sigma prior parameters must be positive");
  }
  slice.validate();
}

SamplerState::SamplerState(const std::vector<std::vector<double>>& data,
                           const LikelihoodModel& model, const TiltingFunction& f, double sigma,
                           const SamplerConfig& cfg, std::uint64_t seed)
    : data_(&data), model_(model), tilt_(f), cfg_(cfg), rng_(seed) {
  if (data.empty()) throw PreconditionError("sampler: empty data");
  cfg_.validate(model_);
  aux_.sigma = StableIndex(sigma).value();
  tilt_.validate(StableIndex(sigma));
  for (const auto& x : data) {
    if (x.size() != model_.dim()) throw DomainError("sampler: observation dimension mismatch");
  }
  labels_.assign(data.size(), 0);
  Cluster c{0, SuffStats(model_.dim()), UnivParams{}};
  for (const auto& x : data) {
    c.stats.add(x);
    ++c.size;
  }
  if (!cfg_.marginalize) {
    c.param = sample_prior_param(model_, rng_);
    for (int l = 0; l < cfg_.M; ++l) empties_.push_back(sample_prior_param(model_, rng_));
  }
  clusters_.push_back(std::move(c));
  K_ = 1;
  if (cfg_.marginalize) {
    const SuffStats empty(model_.dim());
    for (const auto& x : data) prior_pred_.push_back(log_pred_conjugate(model_, x, empty));
  }
}

std::vector<int> SamplerState::assignments() const {
  std::vector<int> map(clusters_.size(), -1);
  std::vector<int> out(labels_.size());
  int next = 0;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    auto& m = map[static_cast<std::size_t>(labels_[i])];
    if (m < 0) m = next++;
    out[i] = m;
  }
  return out;
}

std::vector<int> SamplerState::cluster_sizes() const {
  std::vector<int> out;
  for (const auto& c : clusters_) {
    if (c.size > 0) out.push_back(c.size);
  }
  return out;
}

std::vector<ClusterParams> SamplerState::cluster_params() const {
  std::vector<ClusterParams> out;
  std::vector<char> seen(clusters_.size(), 0);
  for (int l : labels_) {
    if (!seen[static_cast<std::size_t>(l)]) {
      seen[static_cast<std::size_t>(l)] = 1;
      out.push_back(clusters_[static_cast<std::size_t>(l)].param);
    }
  }
  return out;
}

void SamplerState::check() const {
  std::vector<int> counts(clusters_.size(), 0);
  for (int l : labels_) {
    if (l < 0 || l >= static_cast<int>(clusters_.size())) throw std::logic_error("label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  int occupied = 0;
  for (std::size_t s = 0; s < clusters_.size(); ++s) {
    if (counts[s] != clusters_[s].size || clusters_[s].stats.count() != counts[s]) {
      throw std::logic_error("cluster size bookkeeping");
    }
    if (counts[s] > 0) ++occupied;
  }
  if (occupied != K_) throw std::logic_error("K does not match occupied clusters");
  if (!cfg_.marginalize && static_cast<int>(empties_.size()) != cfg_.M) {
    throw std::logic_error("pool size differs from M");
  }
  if (!(aux_.r >= kAuxEps && aux_.r <= 1.0 - kAuxEps) ||
      !(aux_.z >= kAuxEps && aux_.z <= kPi - kAuxEps) || !std::isfinite(aux_.w)) {
    throw std::logic_error("auxiliary variables out of range");
  }
}

int SamplerState::new_slot() {
  if (!free_slots_.empty()) {
    const int s = free_slots_.back();
    free_slots_.pop_back();
    return s;
  }
  clusters_.push_back(Cluster{0, SuffStats(model_.dim()), UnivParams{}});
  return static_cast<int>(clusters_.size()) - 1;
}

void SamplerState::remove_obs(int i) {
  auto& c = clusters_[static_cast<std::size_t>(labels_[static_cast<std::size_t>(i)])];
  c.stats.remove((*data_)[static_cast<std::size_t>(i)]);
  --c.size;
}

void SamplerState::add_obs(int i, int slot) {
  auto& c = clusters_[static_cast<std::size_t>(slot)];
  c.stats.add((*data_)[static_cast<std::size_t>(i)]);
  ++c.size;
  labels_[static_cast<std::size_t>(i)] = slot;
}

void SamplerState::reuse_sweep() {
  const int n = this->n();
  const double s = aux_.sigma;
  const bool marg = cfg_.marginalize;
  const int M = cfg_.M;
  std::vector<int> slots;
  for (int i = 0; i < n; ++i) {
    const Obs x = (*data_)[static_cast<std::size_t>(i)];
    const int old = labels_[static_cast<std::size_t>(i)];
    remove_obs(i);
    if (clusters_[static_cast<std::size_t>(old)].size == 0) {
      if (!marg) {
        const auto k = static_cast<std::size_t>(uniform01(rng_) * M);
        empties_[std::min(k, static_cast<std::size_t>(M - 1))] =
            std::move(clusters_[static_cast<std::size_t>(old)].param);
      }
      free_slots_.push_back(old);
      --K_;
    }
    scratch_.clear();
    slots.clear();
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      const auto& cl = clusters_[c];
      if (cl.size == 0) continue;
      const double ll =
          marg ? log_pred_conjugate(model_, x, cl.stats) : log_lik(model_, x, cl.param);
      scratch_.push_back(std::log(cl.size - s) + ll);
      slots.push_back(static_cast<int>(c));
    }
    const double lw = log_new_cluster_weight(aux_, n, K_, cfg_.form);
    if (marg) {
      scratch_.push_back(lw + prior_pred_[static_cast<std::size_t>(i)]);
    } else {
      const double lm = std::log(static_cast<double>(M));
      for (const auto& e : empties_) scratch_.push_back(lw - lm + log_lik(model_, x, e));
    }
    const std::size_t pick = sample_log_categorical(scratch_, rng_);
    if (pick < slots.size()) {
      add_obs(i, slots[pick]);
      continue;
    }
    const int slot = new_slot();
    auto& cl = clusters_[static_cast<std::size_t>(slot)];
    cl.stats = SuffStats(model_.dim());
    cl.size = 0;
    if (!marg) {
      const std::size_t l = pick - slots.size();
      cl.param = std::move(empties_[l]);
      empties_[l] = sample_prior_param(model_, rng_);
    }
    add_obs(i, slot);
    ++K_;
  }
  if (marg) return;
  for (auto& e : empties_) e = sample_prior_param(model_, rng_);
  for (auto& cl : clusters_) {
    if (cl.size == 0) continue;
    cl.param = sample_cluster_param(model_, cl.stats, rng_, &cl.param, cfg_.slice);
  }
}

namespace {

SliceConfig bounded(SliceConfig c, double lo, double hi) {
  c.lower_bound = lo;
  c.upper_bound = hi;
  return c;
}

#ifndef NDEBUG
// Each conditional must differ from the joint by a constant in its variable.
void probe_consistency(const AuxState& a, int n, int K, const TiltingFunction& f) {
  std::minstd_rand g(static_cast<unsigned>(K * 7919 + n));
  std::uniform_real_distribution<double> u(0.05, 0.95);
  auto near = [](double x, double y) {
    return std::abs(x - y) <= 1e-7 * std::max(1.0, std::abs(x));
  };
  const double base = log_joint_aux(a, n, K, f);
  for (int k = 0; k < 3; ++k) {
    AuxState b = a;
    b.z = kPi * u(g);
    const double jz = log_joint_aux(b, n, K, f);
    if (std::isfinite(jz) && !near(jz - base, log_cond_z(b.z, a) - log_cond_z(a.z, a))) {
      throw std::logic_error("z conditional inconsistent with the joint");
    }
    b = a;
    b.r = u(g);
    const double jr = log_joint_aux(b, n, K, f);
    if (std::isfinite(jr) && !near(jr - base, log_cond_r(b.r, a, n, K) - log_cond_r(a.r, a, n, K))) {
      throw std::logic_error("r conditional inconsistent with the joint");
    }
    b = a;
    b.w = a.w + 2.0 * u(g) - 1.0;
    const double jw = log_joint_aux(b, n, K, f);
    if (std::isfinite(jw) &&
        !near(jw - base, log_cond_w(b.w, a, K, f) - log_cond_w(a.w, a, K, f))) {
      throw std::logic_error("w conditional inconsistent with the joint");
    }
  }
}
#endif

}  // namespace

void SamplerState::update_z() {
  aux_.z = slice_step([&](double z) { return log_cond_z(z, aux_); }, aux_.z,
                      bounded(cfg_.slice, 0.0, kPi), rng_);
  aux_.z = clamp_open(aux_.z, 0.0, kPi);
}

void SamplerState::update_r() {
  const int n = this->n();
  aux_.r = slice_step([&](double r) { return log_cond_r(r, aux_, n, K_); }, aux_.r,
                      bounded(cfg_.slice, 0.0, 1.0), rng_);
  aux_.r = clamp_open(aux_.r, 0.0, 1.0);
}

void SamplerState::update_w() {
  aux_.w = slice_step([&](double w) { return log_cond_w(w, aux_, K_, tilt_); }, aux_.w,
                      bounded(cfg_.slice, -std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity()),
                      rng_);
}

void SamplerState::update_aux() {
  update_z();
  update_r();
  update_w();
#ifndef NDEBUG
  probe_consistency(aux_, n(), K_, tilt_);
#endif
}

void SamplerState::update_sigma() {
  if (!cfg_.update_sigma) return;
  const std::vector<int> sizes = cluster_sizes();
  const double u0 = std::log(aux_.sigma) - std::log1p(-aux_.sigma);
  const double u = slice_step(
      [&](double v) { return log_sigma_target(v, aux_, sizes, tilt_, cfg_.sigma_prior, cfg_.quad); },
      u0,
      bounded(cfg_.slice, -std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity()),
      rng_);
  aux_.sigma = logistic(u);
}

void SamplerState::iterate() {
  update_aux();
  update_sigma();
  reuse_sweep();
}

void ChainConfig::validate() const {
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
    throw DomainError("chain: need iterations > burn_in >= 0");
  }
  if (thin < 1) throw DomainError("chain: thin must be at least 1");
  StableIndex{sigma};
}

namespace {

ChainRecord snapshot(const SamplerState& st, long it) {
  ChainRecord r;
  r.iteration = it;
  r.K = st.K();
  r.assignments = st.assignments();
  r.aux = st.aux();
  if (!st.config().marginalize) r.params = st.cluster_params();
  return r;
}

}  // namespace

ChainTrace run_chain(const std::vector<std::vector<double>>& data, const LikelihoodModel& model,
                     const TiltingFunction& f, const ChainConfig& cfg, const RecordSink& sink) {
  cfg.validate();
  SamplerState st(data, model, f, cfg.sigma, cfg.sampler, cfg.seed);
  ChainTrace trace;
  trace.iterations = cfg.iterations;
  trace.burn_in = cfg.burn_in;
  trace.thin = cfg.thin;
  trace.records.reserve(static_cast<std::size_t>((cfg.iterations - cfg.burn_in) / cfg.thin));
  for (long it = 1; it <= cfg.iterations; ++it) {
    try {
      st.iterate();
#ifndef NDEBUG
      st.check();
#endif
    } catch (const std::exception& e) {
      throw ChainFailure(std::string("iteration ") + std::to_string(it) + ": " + e.what(), it,
                         std::move(trace), snapshot(st, it));
    }
    if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
      trace.records.push_back(snapshot(st, it));
      if (sink) sink(trace.records.back());
    }
  }
  return trace;
}

}  // namespace pkmix
