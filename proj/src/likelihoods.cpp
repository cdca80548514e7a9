// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/likelihoods.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "detail/overloaded.hpp"
#include "pkmix/errors.hpp"

namespace pkmix {

using detail::Overloaded;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

void require_dim(const LikelihoodModel& m, Obs x) {
  if (x.size() != m.dim()) {
    throw DomainError("observation has dimension " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(m.dim()));
  }
}

// log of a Gamma(shape, rate) draw that stays finite for tiny shapes.
double sample_log_gamma(double shape, double rate, Rng& rng) {
  if (shape >= 1.0) return std::log(sample_gamma(shape, rate, rng));
  // G(a) = G(a+1) U^{1/a}
  return std::log(sample_gamma(shape + 1.0, rate, rng)) + std::log(uniform01(rng)) / shape;
}

struct UnivPosterior {
  long n;
  double sx;
  double sxx;
};

UnivPosterior univ_stats(const SuffStats& s) { return {s.count(), s.sum(0), s.cross(0, 0)}; }

// Normal-Gamma posterior (kappa, mean, alpha, beta).
struct NormalGamma {
  double kappa;
  double mean;
  double alpha;
  double beta;
};

NormalGamma conj2_posterior(const model::UnivConjII& p, const UnivPosterior& s) {
  const double n = static_cast<double>(s.n);
  const double kappa = p.tau0 + n;
  const double mean = (p.tau0 * p.mu0 + s.sx) / kappa;
  double beta = p.beta0;
  if (s.n > 0) {
    const double xbar = s.sx / n;
    const double ssd = std::max(0.0, s.sxx - s.sx * xbar);
    beta += 0.5 * (ssd + p.tau0 * n * (xbar - p.mu0) * (xbar - p.mu0) / kappa);
  }
  return {kappa, mean, p.alpha0 + 0.5 * n, beta};
}

struct NiwPosterior {
  double kappa;
  double nu;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scale;
};

NiwPosterior niw_posterior(const model::MvNiw& p, const SuffStats& s) {
  const double n = static_cast<double>(s.count());
  NiwPosterior post{p.r0 + n, p.nu0 + n, p.mu0, p.S0};
  if (s.count() == 0) return post;
  const Eigen::VectorXd sx = s.sum_vector();
  const Eigen::VectorXd xbar = sx / n;
  post.mean = (p.r0 * p.mu0 + sx) / post.kappa;
  const Eigen::VectorXd dev = xbar - p.mu0;
  post.scale = p.S0 + (s.cross_matrix() - sx * xbar.transpose()) +
               (p.r0 * n / post.kappa) * dev * dev.transpose();
  post.scale = 0.5 * (post.scale + post.scale.transpose());
  return post;
}

Eigen::MatrixXd sample_inverse_wishart(double nu, const Eigen::MatrixXd& scale, Rng& rng) {
  const auto d = scale.rows();
  // Sigma^{-1} ~ Wishart(nu, scale^{-1}) by the Bartlett decomposition.
  const Eigen::MatrixXd prec_scale = scale.llt().solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd L = prec_scale.llt().matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(2.0 * sample_gamma(0.5 * (nu - static_cast<double>(i)), 1.0, rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = sample_normal(rng);
  }
  const Eigen::MatrixXd LA = L * A;
  const Eigen::MatrixXd W = LA * LA.transpose();
  Eigen::MatrixXd sigma = W.llt().solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::VectorXd sample_mv_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                 Rng& rng) {
  const Eigen::MatrixXd L = cov.llt().matrixL();
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sample_normal(rng);
  return mean + L * z;
}

double nonconj_log_mu_target(const model::UnivNonConj& p, const UnivPosterior& s, double tau,
                             double mu) {
  const double n = static_cast<double>(s.n);
  const double ss = s.sxx - 2.0 * mu * s.sx + n * mu * mu;
  return p.a0 * mu - p.b0 * std::exp(mu) - 0.5 * tau * ss;
}

}  // namespace

LikelihoodModel::LikelihoodModel(Variant v) : v_(std::move(v)) {
  std::visit(
      Overloaded{
          [](const model::UnivConjI& p) {
            if (!std::isfinite(p.mu0) || !positive(p.tau0) || !positive(p.tau_common)) {
              throw DomainError("Conj I: need finite mu0 and positive tau0, tau_common");
            }
          },
          [](const model::UnivConjII& p) {
            if (!std::isfinite(p.mu0) || !positive(p.tau0) || !positive(p.alpha0) ||
                !positive(p.beta0)) {
              throw DomainError("Conj II: need finite mu0 and positive tau0, alpha0, beta0");
            }
          },
          [](const model::UnivNonConj& p) {
            if (!positive(p.a0) || !positive(p.b0) || !positive(p.alpha0) || !positive(p.beta0)) {
              throw DomainError("NonConj: a0, b0, alpha0, beta0 must be positive");
            }
          },
          [](const model::MvNiw& p) {
            const auto d = p.mu0.size();
            if (d < 1) throw DomainError("NIW: mu0 must be non-empty");
            if (p.S0.rows() != d || p.S0.cols() != d) throw DomainError("NIW: S0 must be d x d");
            if (!p.mu0.allFinite() || !p.S0.allFinite()) throw DomainError("NIW: non-finite input");
            if (!positive(p.r0)) throw DomainError("NIW: r0 must be positive");
            if (!(p.nu0 > static_cast<double>(d) - 1.0) || !std::isfinite(p.nu0)) {
              throw DomainError("NIW: nu0 must exceed d - 1");
            }
            const double asym = (p.S0 - p.S0.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-12 * std::max(1.0, p.S0.cwiseAbs().maxCoeff())) {
              throw DomainError("NIW: S0 must be symmetric");
            }
            if (p.S0.llt().info() != Eigen::Success) {
              throw DomainError("NIW: S0 must be positive definite");
            }
          },
      },
      v_);
}

std::size_t LikelihoodModel::dim() const {
  if (const auto* p = std::get_if<model::MvNiw>(&v_)) return static_cast<std::size_t>(p->mu0.size());
  return 1;
}

bool LikelihoodModel::is_conjugate() const {
  return !std::holds_alternative<model::UnivNonConj>(v_);
}

std::string LikelihoodModel::kind() const {
  return std::visit(Overloaded{
                        [](const model::UnivConjI&) { return std::string("conj1"); },
                        [](const model::UnivConjII&) { return std::string("conj2"); },
                        [](const model::UnivNonConj&) { return std::string("nonconj"); },
                        [](const model::MvNiw&) { return std::string("niw"); },
                    },
                    v_);
}

MvParams MvParams::make(Eigen::VectorXd mu, Eigen::MatrixXd sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw DomainError("MvParams: sigma must be positive definite");
  MvParams p;
  p.chol = llt.matrixL();
  p.log_det = 2.0 * p.chol.diagonal().array().log().sum();
  p.mu = std::move(mu);
  p.sigma = std::move(sigma);
  return p;
}

SuffStats::SuffStats(std::size_t dim) : dim_(dim), sum_(dim), cross_(dim * (dim + 1) / 2) {
  if (dim == 0) throw DomainError("SuffStats: dimension must be positive");
}

std::size_t SuffStats::index(std::size_t j, std::size_t k) const {
  if (j > k) std::swap(j, k);
  return j * dim_ - j * (j - 1) / 2 + (k - j);
}

void SuffStats::add(Obs x) {
  if (x.size() != dim_) throw DomainError("SuffStats: dimension mismatch");
  ++count_;
  for (std::size_t j = 0; j < dim_; ++j) {
    sum_[j].add(x[j]);
    for (std::size_t k = j; k < dim_; ++k) cross_[index(j, k)].add(x[j] * x[k]);
  }
}

void SuffStats::remove(Obs x) {
  if (x.size() != dim_) throw DomainError("SuffStats: dimension mismatch");
  if (count_ == 0) throw PreconditionError("SuffStats: remove from an empty cluster");
  --count_;
  for (std::size_t j = 0; j < dim_; ++j) {
    sum_[j].subtract(x[j]);
    for (std::size_t k = j; k < dim_; ++k) cross_[index(j, k)].subtract(x[j] * x[k]);
  }
}

double SuffStats::cross(std::size_t j, std::size_t k) const { return cross_[index(j, k)].value(); }

Eigen::VectorXd SuffStats::sum_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  for (std::size_t j = 0; j < dim_; ++j) v(static_cast<Eigen::Index>(j)) = sum(j);
  return v;
}

Eigen::MatrixXd SuffStats::cross_matrix() const {
  const auto d = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd m(d, d);
  for (std::size_t j = 0; j < dim_; ++j) {
    for (std::size_t k = j; k < dim_; ++k) {
      const double v = cross(j, k);
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

bool SuffStats::operator==(const SuffStats& o) const {
  return dim_ == o.dim_ && count_ == o.count_ && sum_ == o.sum_ && cross_ == o.cross_;
}

SuffStats make_stats(const LikelihoodModel& m, const std::vector<std::vector<double>>& data) {
  SuffStats s(m.dim());
  for (const auto& x : data) s.add(x);
  return s;
}

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double log_student_t_pdf(double x, double dof, double loc, double scale2) {
  const double z = (x - loc) * (x - loc) / scale2;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * std::numbers::pi * scale2) - 0.5 * (dof + 1.0) * std::log1p(z / dof);
}

double log_mv_student_t_pdf(const Eigen::VectorXd& x, double dof, const Eigen::VectorXd& loc,
                            const Eigen::MatrixXd& scale) {
  const double d = static_cast<double>(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw NumericalFailure("multivariate t: scale not PD");
  const Eigen::VectorXd z = llt.matrixL().solve(x - loc);
  const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return std::lgamma(0.5 * (dof + d)) - std::lgamma(0.5 * dof) -
         0.5 * d * std::log(dof * std::numbers::pi) - 0.5 * log_det -
         0.5 * (dof + d) * std::log1p(z.squaredNorm() / dof);
}

double sample_gamma(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double sample_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double log_pred_conjugate(const LikelihoodModel& m, Obs x, const SuffStats& cluster) {
  require_dim(m, x);
  if (cluster.dim() != m.dim()) throw DomainError("log_pred_conjugate: stats dimension mismatch");
  return std::visit(
      Overloaded{
          [&](const model::UnivConjI& p) {
            const auto s = univ_stats(cluster);
            const double tn = p.tau0 + static_cast<double>(s.n) * p.tau_common;
            const double mn = (p.tau0 * p.mu0 + p.tau_common * s.sx) / tn;
            return log_normal_pdf(x[0], mn, 1.0 / tn + 1.0 / p.tau_common);
          },
          [&](const model::UnivConjII& p) {
            const auto g = conj2_posterior(p, univ_stats(cluster));
            return log_student_t_pdf(x[0], 2.0 * g.alpha, g.mean,
                                     g.beta * (g.kappa + 1.0) / (g.alpha * g.kappa));
          },
          [&](const model::UnivNonConj&) -> double {
            throw UnsupportedOperation("log_pred_conjugate: the log-Gamma mean model is not conjugate");
          },
          [&](const model::MvNiw& p) {
            const auto post = niw_posterior(p, cluster);
            const double d = static_cast<double>(m.dim());
            const double dof = post.nu - d + 1.0;
            const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
            return log_mv_student_t_pdf(xv, dof, post.mean,
                                        post.scale * ((post.kappa + 1.0) / (post.kappa * dof)));
          },
      },
      m.variant());
}

double log_pred_conjugate(const LikelihoodModel& m, Obs x,
                          const std::vector<std::vector<double>>& cluster_data) {
  return log_pred_conjugate(m, x, make_stats(m, cluster_data));
}

double log_prior_predictive(const LikelihoodModel& m, Obs x, const QuadratureConfig& cfg) {
  require_dim(m, x);
  if (const auto* p = std::get_if<model::UnivNonConj>(&m.variant())) {
    // tau integrates out to a Student t; mu = log phi by quadrature.
    const double dof = 2.0 * p->alpha0;
    const double scale2 = p->beta0 / p->alpha0;
    const double log_norm = p->a0 * std::log(p->b0) - std::lgamma(p->a0);
    const double xv = x[0];
    const LogIntegrand f = [&](double mu) {
      const double e = std::exp(mu);
      if (!std::isfinite(e)) return -std::numeric_limits<double>::infinity();
      return log_norm + p->a0 * mu - p->b0 * e + log_student_t_pdf(xv, dof, mu, scale2);
    };
    return log_integrate_real_line(f, std::log(p->a0 / p->b0), 1.0, cfg);
  }
  return log_pred_conjugate(m, x, SuffStats(m.dim()));
}

ClusterParams sample_prior_param(const LikelihoodModel& m, Rng& rng) {
  return sample_cluster_param(m, SuffStats(m.dim()), rng);
}

ClusterParams sample_cluster_param(const LikelihoodModel& m, const SuffStats& cluster, Rng& rng,
                                   const ClusterParams* current, const SliceConfig& slice) {
  if (cluster.dim() != m.dim()) throw DomainError("sample_cluster_param: stats dimension mismatch");
  return std::visit(
      Overloaded{
          [&](const model::UnivConjI& p) -> ClusterParams {
            const auto s = univ_stats(cluster);
            const double tn = p.tau0 + static_cast<double>(s.n) * p.tau_common;
            const double mn = (p.tau0 * p.mu0 + p.tau_common * s.sx) / tn;
            return UnivParams{mn + sample_normal(rng) / std::sqrt(tn), p.tau_common};
          },
          [&](const model::UnivConjII& p) -> ClusterParams {
            const auto g = conj2_posterior(p, univ_stats(cluster));
            const double tau = sample_gamma(g.alpha, g.beta, rng);
            return UnivParams{g.mean + sample_normal(rng) / std::sqrt(g.kappa * tau), tau};
          },
          [&](const model::UnivNonConj& p) -> ClusterParams {
            const auto* cur = current ? std::get_if<UnivParams>(current) : nullptr;
            if (cluster.count() == 0 || cur == nullptr) {
              return UnivParams{sample_log_gamma(p.a0, p.b0, rng),
                                sample_gamma(p.alpha0, p.beta0, rng)};
            }
            const auto s = univ_stats(cluster);
            const double tau_now = cur->tau;
            const double mu = slice_step(
                [&](double v) { return nonconj_log_mu_target(p, s, tau_now, v); }, cur->mu, slice,
                rng);
            const double n = static_cast<double>(s.n);
            const double ss = std::max(0.0, s.sxx - 2.0 * mu * s.sx + n * mu * mu);
            return UnivParams{mu, sample_gamma(p.alpha0 + 0.5 * n, p.beta0 + 0.5 * ss, rng)};
          },
          [&](const model::MvNiw& p) -> ClusterParams {
            const auto post = niw_posterior(p, cluster);
            Eigen::MatrixXd sigma = sample_inverse_wishart(post.nu, post.scale, rng);
            Eigen::VectorXd mu = sample_mv_normal(post.mean, sigma / post.kappa, rng);
            return MvParams::make(std::move(mu), std::move(sigma));
          },
      },
      m.variant());
}

double log_lik(const LikelihoodModel& m, Obs x, const ClusterParams& p) {
  require_dim(m, x);
  if (const auto* u = std::get_if<UnivParams>(&p)) {
    if (m.dim() != 1) throw DomainError("log_lik: univariate parameters for a multivariate model");
    return log_normal_pdf(x[0], u->mu, 1.0 / u->tau);
  }
  const auto& mv = std::get<MvParams>(p);
  if (static_cast<std::size_t>(mv.mu.size()) != m.dim()) {
    throw DomainError("log_lik: parameter dimension mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd z = mv.chol.triangularView<Eigen::Lower>().solve(xv - mv.mu);
  const double d = static_cast<double>(m.dim());
  return -0.5 * (d * kLog2Pi + mv.log_det + z.squaredNorm());
}

}  // namespace pkmix
