// Apache License, Version 2.0, refer to LICENSE.txt

// Exchangeable partitions and their Gibbs-type partition law
//
//   P(Pi_n = {c_1..c_K}) = V_{n,K} prod_k W_{|c_k|}.

#pragma once

#include <map>
#include <vector>

#include "pkmix/quadrature.hpp"
#include "pkmix/random.hpp"
#include "pkmix/stable.hpp"
#include "pkmix/tilting.hpp"

namespace pkmix {

class Partition {
 public:
  Partition() = default;
  // Any integer labels; validated and counted.
  explicit Partition(std::vector<int> assignments);
  // Blocks of 0-based element indices; must cover 0..n-1 exactly once.
  static Partition from_blocks(const std::vector<std::vector<int>>& blocks);

  std::size_t n() const { return assignments_.size(); }
  int K() const { return static_cast<int>(sizes_.size()); }
  const std::vector<int>& assignments() const { return assignments_; }
  const std::map<int, int>& cluster_sizes() const { return sizes_; }
  int size_of(int label) const;

  // Labels 0..K-1 in order of first appearance, so blocks are ordered by
  // their least element.
  Partition canonical() const;
  bool is_canonical() const;
  std::vector<std::vector<int>> blocks() const;  // canonical block order
  std::vector<int> sorted_sizes() const;         // ascending

  bool operator==(const Partition& o) const { return assignments_ == o.assignments_; }

 private:
  std::vector<int> assignments_;
  std::map<int, int> sizes_;
};

// log W_m = log prod_{i=0}^{m-2} (1 - sigma + i).
double log_gibbs_weight(int m, StableIndex sigma);

// log V_{n,K}.  Memoized per (n, K, sigma, tilt, cfg); safe to call from
// several threads.
double log_VnK(int n, int K, StableIndex sigma, const TiltingFunction& f,
               const QuadratureConfig& cfg = {});

enum class EppfMethod {
  Auto,        // closed form where one exists (NS, PY, GT with eta = 0)
  Quadrature,  // always the V_{n,K} integral
};

double log_eppf(const Partition& p, StableIndex sigma, const TiltingFunction& f,
                const QuadratureConfig& cfg = {}, EppfMethod method = EppfMethod::Auto);

// Pitman-Yor(theta, sigma) partition law, theta > -sigma.
double log_eppf_py_closed(const Partition& p, StableIndex sigma, double theta);

// Dirichlet process with concentration theta > 0.
double log_eppf_dp_closed(const Partition& p, double theta);

// NGG partition law through the one-dimensional Laplace-exponent integral
//   int u^{n-1}/Gamma(n) e^{-psi(u)} prod_k kappa(|c_k|, u) du
// of the generalized gamma Levy measure a/Gamma(1-sigma) s^{-1-sigma} e^{-b s}
// with a = sigma and b = tau^{1/sigma}.
double log_eppf_ngg_integral(const Partition& p, StableIndex sigma, double tau,
                             const QuadratureConfig& cfg = {});

// All set partitions of {0..n-1} in canonical form, 1 <= n <= 10.
std::vector<Partition> enumerate_partitions(int n);

// Sequential urn draw from the Gibbs-type prior.
Partition sample_prior_partition(int n, StableIndex sigma, const TiltingFunction& f, Rng& rng,
                                 const QuadratureConfig& cfg = {});

// Drops all memoized V_{n,K} and normalizer values.
void clear_partition_cache();

}  // namespace pkmix
