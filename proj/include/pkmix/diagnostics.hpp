// Apache License, Version 2.0, refer to LICENSE.txt

// Post-chain summaries: effective sample size, co-clustering, dendrograms and
// predictive densities.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pkmix/likelihoods.hpp"
#include "pkmix/sampler.hpp"

namespace pkmix {

// N / (1 + 2 sum rho_k) with the autocovariances truncated and smoothed by
// Geyer's initial monotone positive sequence.  Throws DomainError for fewer
// than 10 values or a constant sequence.
double ess(std::span<const double> values);

// Fraction of records in which observations i and j share a label.
class CoClusterMatrix {
 public:
  explicit CoClusterMatrix(Eigen::MatrixXd p);  // checks the invariants
  const Eigen::MatrixXd& matrix() const { return p_; }
  std::size_t n() const { return static_cast<std::size_t>(p_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  // Symmetric, unit diagonal, entries in [0, 1]; throws DomainError otherwise.
  static void check(const Eigen::MatrixXd& p);

 private:
  Eigen::MatrixXd p_;
};

CoClusterMatrix coclustering(const std::vector<std::vector<int>>& records);
CoClusterMatrix coclustering(const ChainTrace& trace);

// One merge of the hierarchy.  Leaves are 0..n-1; merge m creates node n+m.
struct Merge {
  int left;
  int right;
  double height;
  int size;
};

struct Dendrogram {
  std::vector<Merge> merges;  // n - 1 merges in nondecreasing height
  // Flat clustering with threshold_k clusters, labels by first appearance.
  // With drop_singletons, members of size-one clusters get label -1.
  std::vector<int> flat;
};

// Average linkage on 1 - P.
Dendrogram agglomerate(const CoClusterMatrix& p, int threshold_k, bool drop_singletons = false);
// Flat labels after cutting an existing merge list to k clusters.
std::vector<int> cut_tree(const std::vector<Merge>& merges, int n, int k);

// Posterior predictive density of x_new averaged over trace states.  Each
// state contributes the normalized mixture with weight proportional to
//   sigma e^{(sigma-1)w} (1-r)^{-sigma} Gamma(n+1-sigma K)/Gamma(n+1-sigma(K+1))
// on the prior predictive and n_j - sigma on cluster j.  Cluster j uses
// F(x | y_j) when the trace carries parameters and the conjugate posterior
// predictive given the cluster's data otherwise.
double predictive_density(Obs x_new, const ChainTrace& trace,
                          const std::vector<std::vector<double>>& data,
                          const LikelihoodModel& model);

std::vector<double> density_grid(const ChainTrace& trace,
                                 const std::vector<std::vector<double>>& data,
                                 const LikelihoodModel& model, const std::vector<double>& grid);

struct PredictiveReport {
  std::vector<double> per_point;  // held-out points in index order
  std::vector<double> per_group;  // per held-out set (one per point for LOO)
  double mean = 0.0;              // mean of per_group
  double sd = 0.0;                // sample standard deviation of per_group
};

// Seed of the chain that holds out a set whose smallest index is `first`.
std::uint64_t derive_seed(std::uint64_t base, std::size_t first);

// Test index sets for k-fold splitting: a seeded permutation cut into k
// contiguous parts, each part sorted.
std::vector<std::vector<int>> kfold_splits(int n, int k, std::uint64_t seed);

// Leave-one-out: one chain per observation on the rest of the data.  Chains
// run on `workers` threads (0: hardware concurrency); results do not depend
// on it.
PredictiveReport predictive_loo(const std::vector<std::vector<double>>& data,
                                const LikelihoodModel& model, const TiltingFunction& f,
                                const ChainConfig& cfg, unsigned workers = 0);

PredictiveReport predictive_kfold(const std::vector<std::vector<double>>& data,
                                  const LikelihoodModel& model, const TiltingFunction& f,
                                  const ChainConfig& cfg, int k, std::uint64_t split_seed,
                                  unsigned workers = 0);

}  // namespace pkmix
