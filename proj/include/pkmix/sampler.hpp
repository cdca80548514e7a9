// Apache License, Version 2.0, refer to LICENSE.txt

// Marginal MCMC for sigma-stable Poisson-Kingman mixtures.
//
// Auxiliary variables: W = (sigma/(1-sigma)) log T, R = S/T in (0,1) and the
// Zolotarev variable Z in (0,pi), with joint density (up to 1/pi)
//   e^{-w(1+(1-s)K)} (1-r)^{n-1-Ks} r^{-1/(1-s)} h(e^{(1-s)w/s}) A(z)
//     exp(-r^{-s/(1-s)} e^{-w} A(z)) s^K / Gamma(n-sK) prod_k [1-s]_{n_k-1}.

#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "pkmix/errors.hpp"
#include "pkmix/likelihoods.hpp"
#include "pkmix/partitions.hpp"
#include "pkmix/random.hpp"
#include "pkmix/slice.hpp"
#include "pkmix/tilting.hpp"

namespace pkmix {

inline constexpr double kAuxEps = 1e-12;

struct AuxState {
  double w = 0.0;
  double r = 0.5;
  double z = std::numbers::pi / 2.0;
  double sigma = 0.5;
  bool operator==(const AuxState&) const = default;
};

// Unnormalized log conditionals of the auxiliary variables.
double log_cond_z(double z, const AuxState& aux);
double log_cond_r(double r, const AuxState& aux, int n, int K);
double log_cond_w(double w, const AuxState& aux, int K, const TiltingFunction& f);

// log of the auxiliary part of the joint (everything but the partition factor,
// without the 1/pi and without Z_h).
double log_joint_aux(const AuxState& aux, int n, int K, const TiltingFunction& f);

// log of the full joint of (w, r, z, partition) without likelihood terms,
// including -log Z_h(sigma) so that it is a density in sigma as well.
double log_joint(const AuxState& aux, const std::vector<int>& cluster_sizes,
                 const TiltingFunction& f, const QuadratureConfig& cfg = {});

// log Z_h(sigma); analytic for every tilt except the gamma tilt with eta > 0.
double log_tilt_normalizer(const TiltingFunction& f, StableIndex sigma,
                           const QuadratureConfig& cfg = {});

// log of the unnormalized weight for opening a new cluster when K clusters
// remain after removing one of n observations:
//   sigma e^{(sigma-1)w} (1-r)^{-sigma} Gamma(n - sigma K)/Gamma(n - sigma(K+1)).
// RPower replaces (1-r)^{-sigma} by r^{-sigma}.  It does not leave the
// posterior invariant and is kept only for comparison.
enum class NewClusterForm { OneMinusR, RPower };
double log_new_cluster_weight(const AuxState& aux, int n, int K,
                              NewClusterForm form = NewClusterForm::OneMinusR);

struct SigmaPrior {
  // Beta(a, b) on sigma; Uniform(0,1) by default.
  double a = 1.0;
  double b = 1.0;
  bool operator==(const SigmaPrior&) const = default;
};

// Log target of the sigma update in u = logit(sigma): joint, prior and the
// Jacobian sigma(1-sigma).  With no clusters (no data) only the prior and
// the Jacobian remain.  -inf where the tilt is invalid for sigma.
double log_sigma_target(double u, const AuxState& aux, const std::vector<int>& cluster_sizes,
                        const TiltingFunction& f, const SigmaPrior& prior,
                        const QuadratureConfig& cfg = {});

struct SamplerConfig {
  int M = 2;
  // Integrate cluster parameters out (conjugate models only).
  bool marginalize = false;
  bool update_sigma = false;
  SigmaPrior sigma_prior;
  SliceConfig slice;  // widths for w, r, z and logit sigma; bounds are set per variable
  NewClusterForm form = NewClusterForm::OneMinusR;
  QuadratureConfig quad;
  void validate(const LikelihoodModel& m) const;
  bool operator==(const SamplerConfig&) const = default;
};

struct Cluster {
  int size = 0;
  SuffStats stats;
  ClusterParams param;
};

// Full chain state.  Cluster slots are reused; labels index into `clusters`.
class SamplerState {
 public:
  SamplerState(const std::vector<std::vector<double>>& data, const LikelihoodModel& model,
               const TiltingFunction& f, double sigma, const SamplerConfig& cfg,
               std::uint64_t seed);

  int n() const { return static_cast<int>(data_->size()); }
  int K() const { return K_; }
  const AuxState& aux() const { return aux_; }
  AuxState& aux() { return aux_; }
  Rng& rng() { return rng_; }
  const std::vector<ClusterParams>& empties() const { return empties_; }
  const std::vector<Cluster>& cluster_slots() const { return clusters_; }
  const std::vector<int>& labels() const { return labels_; }

  // Assignments relabelled by first appearance.
  std::vector<int> assignments() const;
  Partition partition() const { return Partition(assignments()); }
  // Sizes and parameters of occupied clusters in first-appearance order.
  std::vector<int> cluster_sizes() const;
  std::vector<ClusterParams> cluster_params() const;

  // Throws std::logic_error when the bookkeeping is inconsistent.
  void check() const;

  // One ReUse pass over all observations, then refresh of the pool and of
  // every occupied cluster's parameters.
  void reuse_sweep();
  // z, then r, then w by slice sampling.
  void update_aux();
  void update_z();
  void update_r();
  void update_w();
  void update_sigma();
  // update_aux, optional update_sigma, reuse_sweep.
  void iterate();

  const LikelihoodModel& model() const { return model_; }
  const TiltingFunction& tilt() const { return tilt_; }
  const SamplerConfig& config() const { return cfg_; }

 private:
  int new_slot();
  void remove_obs(int i);
  void add_obs(int i, int slot);

  const std::vector<std::vector<double>>* data_;
  LikelihoodModel model_;
  TiltingFunction tilt_;
  SamplerConfig cfg_;
  Rng rng_;
  AuxState aux_;
  std::vector<int> labels_;
  std::vector<Cluster> clusters_;
  std::vector<int> free_slots_;
  std::vector<ClusterParams> empties_;
  int K_ = 0;
  std::vector<double> scratch_;
  std::vector<double> prior_pred_;  // marginalized mode: log prior predictive per observation
};

struct ChainRecord {
  long iteration = 0;
  int K = 0;
  std::vector<int> assignments;
  AuxState aux;
  std::vector<ClusterParams> params;  // empty in marginalized mode
  bool operator==(const ChainRecord&) const = default;
};

struct ChainTrace {
  long iterations = 0;
  long burn_in = 0;
  long thin = 1;
  std::vector<ChainRecord> records;
  bool operator==(const ChainTrace&) const = default;
};

struct ChainConfig {
  long iterations = 1000;
  long burn_in = 0;
  long thin = 1;
  std::uint64_t seed = 1;
  double sigma = 0.5;  // initial value, fixed unless sampler.update_sigma
  SamplerConfig sampler;
  void validate() const;
};

// Raised when an iteration fails; carries the records so far and the state
// at the failure so the caller can dump them.
class ChainFailure : public NumericalFailure {
 public:
  ChainFailure(const std::string& what, long iteration, ChainTrace partial, ChainRecord state)
      : NumericalFailure(what),
        iteration(iteration),
        partial(std::move(partial)),
        state(std::move(state)) {}
  long iteration;
  ChainTrace partial;
  ChainRecord state;
};

// Callback invoked on each recorded state (for streaming); may be empty.
using RecordSink = std::function<void(const ChainRecord&)>;

ChainTrace run_chain(const std::vector<std::vector<double>>& data, const LikelihoodModel& model,
                     const TiltingFunction& f, const ChainConfig& cfg,
                     const RecordSink& sink = {});

}  // namespace pkmix
