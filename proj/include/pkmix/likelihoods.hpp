// Apache License, Version 2.0, refer to LICENSE.txt

// Observation models F and base measures H0 for the mixture components.
//
// Gamma(a, b) is shape a, rate b throughout.  The inverse Wishart IW(nu, S)
// has density proportional to |Sigma|^{-(nu+d+1)/2} exp(-tr(S Sigma^{-1})/2),
// mean S / (nu - d - 1).

#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pkmix/exact_sum.hpp"
#include "pkmix/quadrature.hpp"
#include "pkmix/random.hpp"
#include "pkmix/slice.hpp"

namespace pkmix {

using Obs = std::span<const double>;

namespace model {
// mu ~ N(mu0, 1/tau0), tau fixed at tau_common.
struct UnivConjI {
  double mu0 = 0.0;
  double tau0 = 1.0;
  double tau_common = 1.0;
  bool operator==(const UnivConjI&) const = default;
};
// tau ~ Gamma(alpha0, beta0), mu | tau ~ N(mu0, 1/(tau0 tau)).
struct UnivConjII {
  double mu0 = 0.0;
  double tau0 = 1.0;
  double alpha0 = 1.0;
  double beta0 = 1.0;
  bool operator==(const UnivConjII&) const = default;
};
// mu = log phi with phi ~ Gamma(a0, b0); tau ~ Gamma(alpha0, beta0) independently.
struct UnivNonConj {
  double a0 = 1.0;
  double b0 = 1.0;
  double alpha0 = 1.0;
  double beta0 = 1.0;
  bool operator==(const UnivNonConj&) const = default;
};
// Sigma ~ IW(nu0, S0), mu | Sigma ~ N_d(mu0, Sigma / r0).
struct MvNiw {
  Eigen::VectorXd mu0;
  double r0 = 1.0;
  double nu0 = 4.0;
  Eigen::MatrixXd S0;
  bool operator==(const MvNiw& o) const {
    return mu0 == o.mu0 && r0 == o.r0 && nu0 == o.nu0 && S0 == o.S0;
  }
};
}  // namespace model

class LikelihoodModel {
 public:
  using Variant = std::variant<model::UnivConjI, model::UnivConjII, model::UnivNonConj,
                               model::MvNiw>;

  LikelihoodModel(Variant v);  // NOLINT: implicit from a variant member; validates

  const Variant& variant() const { return v_; }
  std::size_t dim() const;
  bool is_conjugate() const;
  // "conj1", "conj2", "nonconj" or "niw".
  std::string kind() const;

 private:
  Variant v_;
};

struct UnivParams {
  double mu = 0.0;
  double tau = 1.0;
  bool operator==(const UnivParams&) const = default;
};

struct MvParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  // Lower Cholesky factor of sigma and log det sigma, cached.
  Eigen::MatrixXd chol;
  double log_det = 0.0;

  static MvParams make(Eigen::VectorXd mu, Eigen::MatrixXd sigma);
  bool operator==(const MvParams& o) const {
    return mu == o.mu && sigma == o.sigma && chol == o.chol && log_det == o.log_det;
  }
};

using ClusterParams = std::variant<UnivParams, MvParams>;

// Count, sum and upper-triangular sum of outer products of the observations
// in one cluster, kept exactly.
class SuffStats {
 public:
  explicit SuffStats(std::size_t dim = 1);

  void add(Obs x);
  void remove(Obs x);

  std::size_t dim() const { return dim_; }
  long count() const { return count_; }
  double sum(std::size_t j) const { return sum_[j].value(); }
  double cross(std::size_t j, std::size_t k) const;  // sum_i x_ij x_ik
  Eigen::VectorXd sum_vector() const;
  Eigen::MatrixXd cross_matrix() const;

  bool operator==(const SuffStats& o) const;

 private:
  std::size_t index(std::size_t j, std::size_t k) const;
  std::size_t dim_;
  long count_ = 0;
  std::vector<ExactSum> sum_;
  std::vector<ExactSum> cross_;
};

SuffStats make_stats(const LikelihoodModel& m, const std::vector<std::vector<double>>& data);

// log of the posterior predictive density of x given the cluster's data;
// with an empty cluster this is the prior predictive.  Conjugate models only.
double log_pred_conjugate(const LikelihoodModel& m, Obs x, const SuffStats& cluster);
double log_pred_conjugate(const LikelihoodModel& m, Obs x,
                          const std::vector<std::vector<double>>& cluster_data);

// log int F(x | y) H0(dy) for every model (one-dimensional quadrature for the
// non-conjugate one).
double log_prior_predictive(const LikelihoodModel& m, Obs x, const QuadratureConfig& cfg = {});

// Draw of the cluster parameters given the cluster data.  Conjugate models
// draw from the exact posterior.  The non-conjugate model performs one Gibbs
// scan started at `current`: a slice step on mu followed by an exact draw of
// tau; without `current`, or for an empty cluster, it draws from H0.
ClusterParams sample_cluster_param(const LikelihoodModel& m, const SuffStats& cluster, Rng& rng,
                                   const ClusterParams* current = nullptr,
                                   const SliceConfig& slice = {});

ClusterParams sample_prior_param(const LikelihoodModel& m, Rng& rng);

// log F(x | params).
double log_lik(const LikelihoodModel& m, Obs x, const ClusterParams& p);

// Distribution helpers shared with the sampler and diagnostics.
double log_normal_pdf(double x, double mean, double var);
double log_student_t_pdf(double x, double dof, double loc, double scale2);
double log_mv_student_t_pdf(const Eigen::VectorXd& x, double dof, const Eigen::VectorXd& loc,
                            const Eigen::MatrixXd& scale);
double sample_gamma(double shape, double rate, Rng& rng);
double sample_normal(Rng& rng);

}  // namespace pkmix
