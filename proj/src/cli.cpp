// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/cli.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pkmix/cli_io.hpp"
#include "pkmix/diagnostics.hpp"
#include "pkmix/errors.hpp"
#include "pkmix/partitions.hpp"

namespace pkmix {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  std::ofstream f(dir / name);
  if (!f) throw InputError("cannot write " + (dir / name).string());
  return f;
}

struct DataOptions {
  std::string path;
  std::string delimiter = ",";
  bool no_header = false;
  std::vector<std::string> names;
  std::vector<int> indices;

  void add(CLI::App* app) {
    app->add_option("--data", path, "Numeric CSV file")->required();
    app->add_option("--delimiter", delimiter, "Field delimiter; 'space' splits on blanks");
    app->add_flag("--no-header", no_header, "First row is data");
    app->add_option("--column", names, "Column to use, by header name (repeatable)");
    app->add_option("--column-index", indices, "Column to use, 0-based (repeatable)");
  }

  Dataset load() const {
    CsvOptions o;
    if (delimiter == "space" || delimiter == " ") {
      o.delimiter = ' ';
    } else if (delimiter == "tab" || delimiter == "\\t") {
      o.delimiter = '\t';
    } else if (delimiter.size() == 1) {
      o.delimiter = delimiter[0];
    } else {
      throw ConfigError("delimiter must be a single character, 'space' or 'tab'");
    }
    o.header = !no_header;
    o.column_names = names;
    o.column_indices = indices;
    return load_csv(path, o);
  }
};

struct TiltOptions {
  std::string kind = "ngg";
  double tau = 1.0;
  double theta = 0.5;
  double eta = 1.0;
  double sigma = 0.5;

  void add(CLI::App* app) {
    app->add_option("--tilt", kind, "Tilting function")
        ->check(CLI::IsMember({"ns", "ngg", "py", "gt"}));
    app->add_option("--tau", tau, "NGG tau");
    app->add_option("--theta", theta, "PY or GT theta");
    app->add_option("--eta", eta, "GT eta");
    app->add_option("--sigma", sigma, "Stable index in (0, 1)");
  }

  TiltingFunction tilt() const {
    if (kind == "ns") return TiltingFunction::ns();
    if (kind == "ngg") return TiltingFunction::ngg(tau);
    if (kind == "py") return TiltingFunction::py(theta);
    return TiltingFunction::gt(theta, eta);
  }
};

// Flag overrides applied on top of the config file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> iterations;
  std::optional<long> burn_in;
  std::optional<long> thin;
  std::optional<int> chains;
  std::optional<int> M;
  std::optional<std::string> sigma;
  std::optional<int> pca;
  bool marginalize = false;

  void add(CLI::App* app, bool seed_required) {
    auto* s = app->add_option("--seed", seed, "Base random seed");
    if (seed_required) s->required();
    app->add_option("--iterations", iterations);
    app->add_option("--burn-in", burn_in);
    app->add_option("--thin", thin);
    app->add_option("--chains", chains);
    app->add_option("--M", M, "Number of new-cluster slots");
    app->add_option("--sigma", sigma, "Fixed sigma or 'infer'");
    app->add_option("--pca", pca, "Project the data on this many principal components");
    app->add_flag("--marginalize", marginalize, "Integrate cluster parameters out");
  }

  RunConfig apply(RunConfig c) const {
    if (seed) c.seed = *seed;
    if (iterations) c.iterations = *iterations;
    if (burn_in) c.burn_in = *burn_in;
    if (thin) c.thin = *thin;
    if (chains) c.chains = *chains;
    if (M) c.M = *M;
    if (pca) c.pca_components = *pca;
    if (marginalize) c.marginalize = true;
    if (sigma) {
      if (*sigma == "infer") {
        c.sigma.reset();
      } else {
        try {
          std::size_t pos = 0;
          c.sigma = std::stod(*sigma, &pos);
          if (pos != sigma->size()) throw std::invalid_argument("trailing");
        } catch (const std::logic_error&) {
          throw ConfigError("--sigma must be a number or 'infer'");
        }
      }
    }
    c.validate();
    return c;
  }
};

Dataset prepare(const RunConfig& c, const DataOptions& d) {
  Dataset data = d.load();
  if (c.pca_components) data = pca_project(data, *c.pca_components);
  return data;
}

int cmd_fit(const std::string& config_path, const DataOptions& dopt, const RunOverrides& ov,
            const std::string& out_dir, int grid_points, std::ostream& out, std::ostream& err) {
  RunConfig cfg = ov.apply(load_config(config_path));
  const Dataset data = prepare(cfg, dopt);
  const LikelihoodModel model = resolve_model(cfg, data);
  const auto rows = data.rows();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto f = open_out(dir, "config.json");
    f << config_to_json(cfg).dump(2) << '\n';
  }

  std::vector<ChainTrace> traces(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  std::vector<std::string> failures(static_cast<std::size_t>(cfg.chains));
  const auto run_one = [&](int c) {
    const auto idx = static_cast<std::size_t>(c);
    try {
      auto f = open_out(dir, "trace_chain" + std::to_string(c) + ".ndjson");
      TraceWriter w(f, cfg, c, data);
      try {
        traces[idx] = run_chain(rows, model, cfg.tilt, chain_config(cfg, c),
                                [&](const ChainRecord& r) { w.write(r); });
      } catch (const ChainFailure& e) {
        w.write_failure(e);
        failures[idx] = e.what();
        throw;
      }
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };
  if (cfg.chains == 1) {
    run_one(0);
  } else {
    std::vector<std::thread> pool;
    for (int c = 0; c < cfg.chains; ++c) pool.emplace_back(run_one, c);
    for (auto& t : pool) t.join();
  }
  for (int c = 0; c < cfg.chains; ++c) {
    if (!failures[static_cast<std::size_t>(c)].empty()) {
      err << "chain " << c << " failed: " << failures[static_cast<std::size_t>(c)]
          << "; partial trace in trace_chain" << c << ".ndjson\n";
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Summary over all chains.
  std::map<int, long> hist;
  long total = 0;
  double sigma_sum = 0.0;
  std::vector<std::vector<int>> all;
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      ++hist[r.K];
      ++total;
      sigma_sum += r.aux.sigma;
      all.push_back(r.assignments);
    }
  }
  {
    auto f = open_out(dir, "k_histogram.tsv");
    f << "K\tcount\tfrequency\n";
    for (const auto& [k, cnt] : hist) {
      f << k << '\t' << cnt << '\t' << fmt(static_cast<double>(cnt) / static_cast<double>(total)) << '\n';
    }
  }
  int mode = 0;
  long best = -1;
  double kmean = 0.0;
  for (const auto& [k, cnt] : hist) {
    if (cnt > best) {
      best = cnt;
      mode = k;
    }
    kmean += static_cast<double>(k) * static_cast<double>(cnt) / static_cast<double>(total);
  }
  std::vector<std::pair<std::string, std::string>> summary{
      {"n", std::to_string(data.n())},
      {"d", std::to_string(data.d())},
      {"chains", std::to_string(cfg.chains)},
      {"records", std::to_string(total)},
      {"K_mode", std::to_string(mode)},
      {"K_mean", fmt(kmean)},
  };
  for (int c = 0; c < cfg.chains; ++c) {
    std::vector<double> ks;
    for (const auto& r : traces[static_cast<std::size_t>(c)].records) ks.push_back(r.K);
    std::string v = "NA";
    try {
      v = fmt(ess(ks));
    } catch (const DomainError&) {
    }
    summary.emplace_back("ess_K_chain" + std::to_string(c), v);
  }
  if (!cfg.sigma) summary.emplace_back("sigma_mean", fmt(sigma_sum / static_cast<double>(total)));
  if (!data.explained_variance.empty()) {
    summary.emplace_back("pca_explained_variance", fmt(data.explained_variance_total()));
  }
  {
    auto f = open_out(dir, "summary.tsv");
    f << "statistic\tvalue\n";
    for (const auto& [k, v] : summary) f << k << '\t' << v << '\n';
  }
  {
    auto f = open_out(dir, "coclustering.csv");
    write_matrix_csv(f, coclustering(all).matrix());
  }
  if (grid_points > 1) {
    if (data.d() != 1) throw ConfigError("--grid needs univariate data");
    const double lo = data.values.minCoeff();
    const double hi = data.values.maxCoeff();
    const double pad = 0.25 * (hi - lo) + 1e-12;
    std::vector<double> grid;
    for (int g = 0; g < grid_points; ++g) {
      grid.push_back(lo - pad + (hi - lo + 2.0 * pad) * g / (grid_points - 1));
    }
    ChainTrace merged;
    for (const auto& t : traces) merged.records.insert(merged.records.end(), t.records.begin(), t.records.end());
    const auto dens = density_grid(merged, rows, model, grid);
    auto f = open_out(dir, "density.tsv");
    for (std::size_t g = 0; g < grid.size(); ++g) f << fmt(grid[g], "%.10g") << '\t' << fmt(dens[g], "%.10g") << '\n';
  }
  out << "statistic\tvalue\n";
  for (const auto& [k, v] : summary) out << k << '\t' << v << '\n';
  out << "\nK\tcount\tfrequency\n";
  for (const auto& [k, cnt] : hist) {
    out << k << '\t' << cnt << '\t' << fmt(static_cast<double>(cnt) / static_cast<double>(total)) << '\n';
  }
  return kExitOk;
}

int cmd_predict(const std::string& config_path, const DataOptions& dopt, const RunOverrides& ov,
                bool loo, int kfold, std::optional<std::uint64_t> split_seed, unsigned workers,
                const std::string& out_dir, std::ostream& out) {
  if (loo == (kfold > 0)) throw ConfigError("predict needs exactly one of --loo and --kfold");
  RunConfig cfg = ov.apply(load_config(config_path));
  const Dataset data = prepare(cfg, dopt);
  const LikelihoodModel model = resolve_model(cfg, data);
  const auto rows = data.rows();
  const ChainConfig cc = chain_config(cfg, 0);
  const PredictiveReport rep =
      loo ? predictive_loo(rows, model, cfg.tilt, cc, workers)
          : predictive_kfold(rows, model, cfg.tilt, cc, kfold, split_seed.value_or(cfg.seed), workers);
  std::ostringstream table;
  table << "index\tpredictive\n";
  for (std::size_t i = 0; i < rep.per_point.size(); ++i) {
    table << i << '\t' << fmt(rep.per_point[i], "%.10g") << '\n';
  }
  std::ostringstream stats;
  stats << "statistic\tvalue\n"
        << "groups\t" << rep.per_group.size() << '\n'
        << "mean\t" << fmt(rep.mean, "%.10g") << '\n'
        << "sd\t" << fmt(rep.sd, "%.10g") << '\n';
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    open_out(dir, "predictive.tsv") << table.str();
    open_out(dir, "predictive_summary.tsv") << stats.str();
  }
  out << stats.str();
  return kExitOk;
}

int cmd_dendro(const std::string& matrix_path, int k, bool drop, const std::string& out_dir,
               std::ostream& out) {
  std::ifstream in(matrix_path);
  if (!in) throw InputError("cannot open " + matrix_path);
  const auto d = agglomerate(CoClusterMatrix(read_matrix_csv(in, matrix_path)), k, drop);
  std::ostringstream merges;
  merges << "left\tright\theight\tsize\n";
  for (const auto& m : d.merges) {
    merges << m.left << '\t' << m.right << '\t' << fmt(m.height, "%.10g") << '\t' << m.size << '\n';
  }
  std::ostringstream flat;
  flat << "index\tcluster\n";
  for (std::size_t i = 0; i < d.flat.size(); ++i) flat << i << '\t' << d.flat[i] << '\n';
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    open_out(dir, "merges.tsv") << merges.str();
    open_out(dir, "clusters.tsv") << flat.str();
  }
  out << flat.str();
  return kExitOk;
}

int cmd_eppf(const TiltOptions& t, int n, const std::string& partition, bool enumerate, bool check,
             double tolerance, bool quadrature, std::ostream& out, std::ostream& err) {
  const StableIndex sigma(t.sigma);
  const TiltingFunction f = t.tilt();
  f.validate(sigma);
  const EppfMethod method = quadrature ? EppfMethod::Quadrature : EppfMethod::Auto;
  if (!partition.empty()) {
    std::vector<int> labels;
    std::stringstream ss(partition);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        labels.push_back(std::stoi(tok));
      } catch (const std::logic_error&) {
        throw ConfigError("--partition must be comma-separated integer labels");
      }
    }
    const Partition p(labels);
    out << "log_eppf\t" << fmt(log_eppf(p, sigma, f, {}, method), "%.12g") << '\n';
    return kExitOk;
  }
  if (n < 1 || n > 10) throw ConfigError("--n must lie in [1, 10]");
  const auto parts = enumerate_partitions(n);
  double sum = 0.0;
  if (enumerate) out << "partition\tlog_eppf\tprobability\n";
  for (const auto& p : parts) {
    const double l = log_eppf(p, sigma, f, {}, method);
    sum += std::exp(l);
    if (enumerate) out << join(p.assignments()) << '\t' << fmt(l, "%.12g") << '\t' << fmt(std::exp(l), "%.12g") << '\n';
  }
  if (check || !enumerate) {
    out << "partitions\t" << parts.size() << '\n';
    out << "sum = " << fmt(sum, "%.6f") << '\n';
    out << "deviation\t" << fmt(std::abs(sum - 1.0), "%.3e") << '\n';
    if (check && !(std::abs(sum - 1.0) <= tolerance)) {
      err << "normalization off by " << fmt(std::abs(sum - 1.0), "%.3e") << " (tolerance "
          << fmt(tolerance, "%.1e") << ")\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

int cmd_prior_sim(const TiltOptions& t, int n, long draws, std::uint64_t seed, bool print,
                  std::ostream& out) {
  if (n < 1) throw ConfigError("--n must be positive");
  if (draws < 1) throw ConfigError("--draws must be positive");
  const StableIndex sigma(t.sigma);
  const TiltingFunction f = t.tilt();
  f.validate(sigma);
  Rng rng(seed);
  std::map<int, long> hist;
  if (print) out << "draw\tassignments\n";
  for (long d = 0; d < draws; ++d) {
    const Partition p = sample_prior_partition(n, sigma, f, rng);
    ++hist[p.K()];
    if (print) out << d << '\t' << join(p.assignments()) << '\n';
  }
  if (print) out << '\n';
  out << "K\tcount\tfrequency\n";
  for (const auto& [k, c] : hist) {
    out << k << '\t' << c << '\t' << fmt(static_cast<double>(c) / static_cast<double>(draws)) << '\n';
  }
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture models with sigma-stable Poisson-Kingman priors", "pkmix"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  DataOptions dopt;
  RunOverrides ov;

  auto* fit = app.add_subcommand("fit", "Run chains and write traces and summaries");
  int grid_points = 0;
  fit->add_option("--config", config_path, "Run configuration (JSON)")->required();
  fit->add_option("--out", out_dir, "Output directory")->required();
  fit->add_option("--grid", grid_points, "Density grid points (univariate data)");
  dopt.add(fit);
  ov.add(fit, true);

  auto* predict = app.add_subcommand("predict", "Leave-one-out or k-fold predictive densities");
  bool loo = false;
  int kfold = 0;
  std::optional<std::uint64_t> split_seed;
  unsigned workers = 0;
  DataOptions popt;
  RunOverrides pov;
  std::string pconfig;
  std::string pout;
  predict->add_option("--config", pconfig, "Run configuration (JSON)")->required();
  predict->add_option("--out", pout, "Output directory");
  predict->add_flag("--loo", loo, "Leave one out");
  predict->add_option("--kfold", kfold, "Number of folds");
  predict->add_option("--split-seed", split_seed, "Seed of the fold assignment");
  predict->add_option("--workers", workers, "Worker threads (0: all cores)");
  popt.add(predict);
  pov.add(predict, false);

  auto* dendro = app.add_subcommand("dendro", "Average-linkage clustering of a co-clustering matrix");
  std::string matrix_path;
  int k = 0;
  bool drop = false;
  std::string dout;
  dendro->add_option("--matrix", matrix_path, "Co-clustering matrix (CSV)")->required();
  dendro->add_option("--k", k, "Number of clusters")->required();
  dendro->add_flag("--drop-singletons", drop, "Label members of singleton clusters -1");
  dendro->add_option("--out", dout, "Output directory");

  auto* eppf = app.add_subcommand("eppf", "Evaluate or enumerate partition probabilities");
  TiltOptions et;
  int en = 0;
  std::string partition;
  bool enumerate = false;
  bool check = false;
  bool quadrature = false;
  double tolerance = 1e-6;
  et.add(eppf);
  eppf->add_option("--n", en, "Number of elements");
  eppf->add_option("--partition", partition, "Comma-separated labels");
  eppf->add_flag("--enumerate", enumerate, "List every partition of n");
  eppf->add_flag("--check-normalization", check, "Fail when the sum over partitions is not 1");
  eppf->add_option("--tolerance", tolerance, "Normalization tolerance");
  eppf->add_flag("--quadrature", quadrature, "Force the V_{n,K} integral");

  auto* prior = app.add_subcommand("prior-sim", "Sample partitions from the prior");
  TiltOptions pt;
  int pn = 0;
  long draws = 1000;
  std::uint64_t pseed = 1;
  bool print = false;
  pt.add(prior);
  prior->add_option("--n", pn, "Number of elements")->required();
  prior->add_option("--draws", draws, "Number of draws");
  prior->add_option("--seed", pseed, "Random seed");
  prior->add_flag("--print", print, "Print every draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit) return cmd_fit(config_path, dopt, ov, out_dir, grid_points, out, err);
    if (*predict) return cmd_predict(pconfig, popt, pov, loo, kfold, split_seed, workers, pout, out);
    if (*dendro) return cmd_dendro(matrix_path, k, drop, dout, out);
    if (*eppf) {
      if (partition.empty() && en == 0) throw ConfigError("eppf needs --n or --partition");
      return cmd_eppf(et, en, partition, enumerate, check, tolerance, quadrature, out, err);
    }
    return cmd_prior_sim(pt, pn, draws, pseed, print, out);
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace pkmix
