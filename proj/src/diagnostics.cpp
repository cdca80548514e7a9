// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "pkmix/errors.hpp"

namespace pkmix {

double ess(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 10) throw DomainError("ess: need at least 10 values");
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
    throw DomainError("ess: undefined for a constant sequence");
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = values[i] - mean;
  const auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  // Sum of Gamma_m = gamma_{2m} + gamma_{2m+1} while positive, made monotone.
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = (m == 0 ? g0 : autocov(2 * m)) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = -1.0 + 2.0 * sum / g0;
  return static_cast<double>(n) / tau;
}

void CoClusterMatrix::check(const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols()) throw DomainError("co-clustering matrix must be square");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (p(i, i) != 1.0) throw DomainError("co-clustering matrix needs a unit diagonal");
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (!(p(i, j) >= 0.0 && p(i, j) <= 1.0)) throw DomainError("co-clustering entry outside [0,1]");
      if (p(i, j) != p(j, i)) throw DomainError("co-clustering matrix must be symmetric");
    }
  }
}

CoClusterMatrix::CoClusterMatrix(Eigen::MatrixXd p) : p_(std::move(p)) { check(p_); }

CoClusterMatrix coclustering(const std::vector<std::vector<int>>& records) {
  if (records.empty()) throw DomainError("coclustering: no records");
  const std::size_t n = records[0].size();
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& r : records) {
    if (r.size() != n) throw DomainError("coclustering: records differ in length");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (r[i] == r[j]) ++counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double m = static_cast<double>(records.size());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.cols(); ++j) {
      p(i, j) = p(j, i) = counts(i, j) / m;
    }
  }
  return CoClusterMatrix(std::move(p));
}

CoClusterMatrix coclustering(const ChainTrace& trace) {
  std::vector<std::vector<int>> records;
  records.reserve(trace.records.size());
  for (const auto& r : trace.records) records.push_back(r.assignments);
  return coclustering(records);
}

namespace {

int find(std::vector<int>& parent, int a) {
  while (parent[static_cast<std::size_t>(a)] != a) {
    parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
    a = parent[static_cast<std::size_t>(a)];
  }
  return a;
}

}  // namespace

std::vector<int> cut_tree(const std::vector<Merge>& merges, int n, int k) {
  if (k < 1 || k > n) throw DomainError("cut_tree: k must lie in [1, n]");
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  for (int m = 0; m < n - k; ++m) {
    const auto& mg = merges[static_cast<std::size_t>(m)];
    parent[static_cast<std::size_t>(find(parent, mg.left))] = n + m;
    parent[static_cast<std::size_t>(find(parent, mg.right))] = n + m;
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<int> map(static_cast<std::size_t>(2 * n - 1), -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    auto& l = map[static_cast<std::size_t>(find(parent, i))];
    if (l < 0) l = next++;
    labels[static_cast<std::size_t>(i)] = l;
  }
  return labels;
}

Dendrogram agglomerate(const CoClusterMatrix& p, int threshold_k, bool drop_singletons) {
  const int n = static_cast<int>(p.n());
  if (threshold_k < 1 || threshold_k > n) throw DomainError("agglomerate: threshold_k must lie in [1, n]");
  // Nearest-neighbour chain; average linkage is reducible so the merges it
  // finds are those of the greedy algorithm up to order.
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(n, n) - p.matrix();
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<int> node(static_cast<std::size_t>(n));
  std::iota(node.begin(), node.end(), 0);
  struct Raw {
    int a;
    int b;
    double h;
  };
  std::vector<Raw> raw;
  std::vector<int> chain;
  int remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (int i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) {
          chain.push_back(i);
          break;
        }
      }
    }
    const int a = chain.back();
    const int prev = chain.size() > 1 ? chain[chain.size() - 2] : -1;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == a || !active[static_cast<std::size_t>(j)]) continue;
      // Prefer the previous chain element on ties so the chain terminates.
      if (d(a, j) < best_d || (d(a, j) == best_d && j == prev)) {
        best_d = d(a, j);
        best = j;
      }
    }
    if (best != prev) {
      chain.push_back(best);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const int lo = std::min(a, best);
    const int hi = std::max(a, best);
    raw.push_back({lo, hi, best_d});
    const double na = size[static_cast<std::size_t>(lo)];
    const double nb = size[static_cast<std::size_t>(hi)];
    for (int j = 0; j < n; ++j) {
      if (!active[static_cast<std::size_t>(j)] || j == lo || j == hi) continue;
      const double v = (na * d(lo, j) + nb * d(hi, j)) / (na + nb);
      d(lo, j) = d(j, lo) = v;
    }
    size[static_cast<std::size_t>(lo)] += size[static_cast<std::size_t>(hi)];
    active[static_cast<std::size_t>(hi)] = 0;
    --remaining;
  }
  // Order by height and give merged nodes their ids.
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return raw[x].h < raw[y].h; });
  // Slot representative -> current node id, replayed in sorted order.
  Dendrogram out;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> rep_node(static_cast<std::size_t>(n));
  std::iota(rep_node.begin(), rep_node.end(), 0);
  std::vector<int> rep_size(static_cast<std::size_t>(n), 1);
  for (std::size_t m = 0; m < order.size(); ++m) {
    const auto& r = raw[order[m]];
    const int ra = find(parent, r.a);
    const int rb = find(parent, r.b);
    const int na = rep_node[static_cast<std::size_t>(ra)];
    const int nb = rep_node[static_cast<std::size_t>(rb)];
    const int sz = rep_size[static_cast<std::size_t>(ra)] + rep_size[static_cast<std::size_t>(rb)];
    out.merges.push_back({std::min(na, nb), std::max(na, nb), r.h, sz});
    parent[static_cast<std::size_t>(rb)] = ra;
    rep_node[static_cast<std::size_t>(ra)] = n + static_cast<int>(m);
    rep_size[static_cast<std::size_t>(ra)] = sz;
  }
  out.flat = cut_tree(out.merges, n, threshold_k);
  if (drop_singletons) {
    std::vector<int> count(static_cast<std::size_t>(threshold_k), 0);
    for (int l : out.flat) ++count[static_cast<std::size_t>(l)];
    std::vector<int> map(static_cast<std::size_t>(threshold_k), -1);
    int next = 0;
    for (int& l : out.flat) {
      if (count[static_cast<std::size_t>(l)] == 1) {
        l = -1;
        continue;
      }
      auto& m = map[static_cast<std::size_t>(l)];
      if (m < 0) m = next++;
      l = m;
    }
  }
  return out;
}

namespace {

// One trace state as a mixture over clusters plus the prior predictive.
struct StateMixture {
  std::vector<double> log_w;  // per cluster, then the new-cluster weight last
  std::vector<SuffStats> stats;
  const std::vector<ClusterParams>* params = nullptr;
};

StateMixture build_state(const ChainRecord& rec, const std::vector<std::vector<double>>& data,
                         const LikelihoodModel& model) {
  const auto n = static_cast<int>(rec.assignments.size());
  if (static_cast<std::size_t>(n) != data.size()) {
    throw DomainError("predictive: trace and data differ in length");
  }
  StateMixture s;
  std::vector<int> sizes(static_cast<std::size_t>(rec.K), 0);
  for (int l : rec.assignments) ++sizes[static_cast<std::size_t>(l)];
  const double sg = rec.aux.sigma;
  std::vector<double> lw;
  for (int m : sizes) lw.push_back(std::log(m - sg));
  lw.push_back(log_new_cluster_weight(rec.aux, n + 1, rec.K));
  double mx = *std::max_element(lw.begin(), lw.end());
  double z = 0.0;
  for (double v : lw) z += std::exp(v - mx);
  for (double& v : lw) v -= mx + std::log(z);
  s.log_w = std::move(lw);
  if (rec.params.empty()) {
    s.stats.assign(static_cast<std::size_t>(rec.K), SuffStats(model.dim()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      s.stats[static_cast<std::size_t>(rec.assignments[i])].add(data[i]);
    }
  } else {
    if (static_cast<int>(rec.params.size()) != rec.K) throw DomainError("predictive: params do not match K");
    s.params = &rec.params;
  }
  return s;
}

double eval_state(const StateMixture& s, Obs x, const LikelihoodModel& model, double log_prior_pred) {
  const std::size_t K = s.log_w.size() - 1;
  double total = std::exp(s.log_w[K] + log_prior_pred);
  for (std::size_t j = 0; j < K; ++j) {
    const double ll = s.params ? log_lik(model, x, (*s.params)[j]) : log_pred_conjugate(model, x, s.stats[j]);
    total += std::exp(s.log_w[j] + ll);
  }
  if (!std::isfinite(total)) throw NumericalFailure("predictive: non-finite component density");
  return total;
}

std::vector<double> evaluate(const std::vector<std::vector<double>>& xs, const ChainTrace& trace,
                             const std::vector<std::vector<double>>& data,
                             const LikelihoodModel& model) {
  if (trace.records.empty()) throw PreconditionError("predictive: empty trace");
  std::vector<double> lpp;
  for (const auto& x : xs) lpp.push_back(log_prior_predictive(model, x));
  std::vector<double> acc(xs.size(), 0.0);
  for (const auto& rec : trace.records) {
    const StateMixture s = build_state(rec, data, model);
    for (std::size_t g = 0; g < xs.size(); ++g) acc[g] += eval_state(s, xs[g], model, lpp[g]);
  }
  for (double& v : acc) v /= static_cast<double>(trace.records.size());
  return acc;
}

}  // namespace

double predictive_density(Obs x_new, const ChainTrace& trace,
                          const std::vector<std::vector<double>>& data,
                          const LikelihoodModel& model) {
  return evaluate({std::vector<double>(x_new.begin(), x_new.end())}, trace, data, model)[0];
}

std::vector<double> density_grid(const ChainTrace& trace,
                                 const std::vector<std::vector<double>>& data,
                                 const LikelihoodModel& model, const std::vector<double>& grid) {
  if (model.dim() != 1) throw DomainError("density_grid: univariate models only");
  std::vector<std::vector<double>> xs;
  for (double g : grid) xs.push_back({g});
  return evaluate(xs, trace, data, model);
}

std::uint64_t derive_seed(std::uint64_t base, std::size_t first) {
  // splitmix64 finalizer over base and index.
  std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(first) + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::vector<int>> kfold_splits(int n, int k, std::uint64_t seed) {
  if (k < 2 || k > n) throw DomainError("kfold: need 2 <= k <= n");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = std::min(i, static_cast<int>(uniform01(rng) * (i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const int len = n / k + (f < n % k ? 1 : 0);
    for (int t = 0; t < len; ++t) folds[static_cast<std::size_t>(f)].push_back(perm[pos++]);
    std::sort(folds[static_cast<std::size_t>(f)].begin(), folds[static_cast<std::size_t>(f)].end());
  }
  return folds;
}

namespace {

// Runs one chain per held-out set and fills per-point values.
PredictiveReport held_out(const std::vector<std::vector<double>>& data, const LikelihoodModel& model,
                          const TiltingFunction& f, const ChainConfig& cfg,
                          const std::vector<std::vector<int>>& sets, unsigned workers) {
  const std::size_t n = data.size();
  PredictiveReport rep;
  rep.per_point.assign(n, 0.0);
  rep.per_group.assign(sets.size(), 0.0);
  const auto job = [&](std::size_t g) {
    const auto& test = sets[g];
    std::vector<char> out(n, 0);
    for (int i : test) out[static_cast<std::size_t>(i)] = 1;
    std::vector<std::vector<double>> train;
    for (std::size_t i = 0; i < n; ++i) {
      if (!out[i]) train.push_back(data[i]);
    }
    if (train.empty()) throw PreconditionError("held-out set leaves no training data");
    ChainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::size_t>(test.front()));
    const ChainTrace trace = run_chain(train, model, f, c);
    std::vector<std::vector<double>> xs;
    for (int i : test) xs.push_back(data[static_cast<std::size_t>(i)]);
    const auto dens = evaluate(xs, trace, train, model);
    double s = 0.0;
    for (std::size_t t = 0; t < test.size(); ++t) {
      rep.per_point[static_cast<std::size_t>(test[t])] = dens[t];
      s += dens[t];
    }
    rep.per_group[g] = s / static_cast<double>(test.size());
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(sets.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t g = next++; g < sets.size(); g = next++) {
      try {
        job(g);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = sets.size();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  const double m = static_cast<double>(rep.per_group.size());
  rep.mean = std::accumulate(rep.per_group.begin(), rep.per_group.end(), 0.0) / m;
  double ss = 0.0;
  for (double v : rep.per_group) ss += (v - rep.mean) * (v - rep.mean);
  rep.sd = m > 1 ? std::sqrt(ss / (m - 1)) : 0.0;
  return rep;
}

}  // namespace

PredictiveReport predictive_loo(const std::vector<std::vector<double>>& data,
                                const LikelihoodModel& model, const TiltingFunction& f,
                                const ChainConfig& cfg, unsigned workers) {
  if (data.size() < 2) throw PreconditionError("loo: need at least 2 observations");
  std::vector<std::vector<int>> sets;
  for (std::size_t i = 0; i < data.size(); ++i) sets.push_back({static_cast<int>(i)});
  return held_out(data, model, f, cfg, sets, workers);
}

PredictiveReport predictive_kfold(const std::vector<std::vector<double>>& data,
                                  const LikelihoodModel& model, const TiltingFunction& f,
                                  const ChainConfig& cfg, int k, std::uint64_t split_seed,
                                  unsigned workers) {
  const auto sets = kfold_splits(static_cast<int>(data.size()), k, split_seed);
  return held_out(data, model, f, cfg, sets, workers);
}

}  // namespace pkmix
