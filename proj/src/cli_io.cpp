// Apache License, Version 2.0, refer to LICENSE.txt

#include "pkmix/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "pkmix/diagnostics.hpp"
#include "pkmix/errors.hpp"

namespace pkmix {

using nlohmann::json;

std::vector<std::vector<double>> Dataset::rows() const {
  std::vector<std::vector<double>> out(n(), std::vector<double>(d()));
  for (std::size_t i = 0; i < n(); ++i) {
    for (std::size_t j = 0; j < d(); ++j) {
      out[i][j] = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

double Dataset::explained_variance_total() const {
  double s = 0.0;
  for (double v : explained_variance) s += v;
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) out.push_back(f);
    return out;
  }
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == delim && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  return l.empty() || l == "na" || l == "nan" || l == "null" || l == "?";
}

std::string where(const std::string& source, long row, std::size_t col) {
  return source + ":" + std::to_string(row) + ":" + std::to_string(col + 1);
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvOptions& opt, const std::string& source) {
  std::string line;
  long row = 0;
  std::vector<std::string> header;
  std::size_t width = 0;
  std::vector<std::size_t> sel;
  bool have_layout = false;
  std::vector<std::vector<double>> rows;

  const auto set_layout = [&](std::size_t fields) {
    width = fields;
    if (!opt.column_names.empty()) {
      if (header.empty()) throw InputError(source + ": column names need a header row");
      for (const auto& name : opt.column_names) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InputError(source + ": no column named '" + name + "'");
        sel.push_back(static_cast<std::size_t>(it - header.begin()));
      }
    }
    for (int c : opt.column_indices) {
      if (c < 0 || static_cast<std::size_t>(c) >= width) {
        throw InputError(source + ": column index " + std::to_string(c) + " out of range");
      }
      sel.push_back(static_cast<std::size_t>(c));
    }
    if (sel.empty()) {
      for (std::size_t c = 0; c < width; ++c) sel.push_back(c);
    }
    have_layout = true;
  };

  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    auto fields = split(line, opt.delimiter);
    if (opt.header && header.empty() && !have_layout) {
      header = fields;
      set_layout(fields.size());
      continue;
    }
    if (!have_layout) set_layout(fields.size());
    if (fields.size() != width) {
      throw InputError(source + ":" + std::to_string(row) + ": expected " + std::to_string(width) +
                       " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> r;
    for (std::size_t c : sel) {
      const std::string& cell = fields[c];
      const std::string label = header.empty() ? "" : " (column '" + header[c] + "')";
      if (is_missing(cell)) throw InputError("missing value at " + where(source, row, c) + label);
      double v = 0.0;
      const auto* b = cell.data();
      const auto* e = cell.data() + cell.size();
      if (*b == '+') ++b;
      const auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e || !std::isfinite(v)) {
        throw InputError("non-numeric cell '" + cell + "' at " + where(source, row, c) + label);
      }
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw InputError(source + ": no data rows");
  Dataset out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(sel.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < sel.size(); ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  if (!header.empty()) {
    for (std::size_t c : sel) out.columns.push_back(header[c]);
  }
  out.provenance = "raw " + source;
  return out;
}

Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_csv(in, opt, path);
}

Dataset pca_project(const Dataset& data, int k) {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto d = static_cast<Eigen::Index>(data.d());
  if (k < 1 || k > std::min(n, d)) throw DomainError("pca: k must lie in [1, min(n, d)]");
  if (n < 2) throw DomainError("pca: need at least 2 rows");
  const Eigen::MatrixXd centred = data.values.rowwise() - data.values.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalFailure("pca: eigendecomposition failed");
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  const double total = ev.sum();
  if (!(total > 0.0)) throw DomainError("pca: data have zero variance");
  Eigen::MatrixXd dirs(d, k);
  Dataset out;
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - c;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    dirs.col(c) = v;
    out.explained_variance.push_back(ev(src) / total);
    out.columns.push_back("PC" + std::to_string(c + 1));
  }
  out.values = centred * dirs;
  out.provenance = "pca k=" + std::to_string(k) + " of " + data.provenance;
  return out;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& source) {
  CsvOptions opt;
  opt.header = false;
  return parse_csv(in, opt, source).values;
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

const std::set<std::string>& model_keys(const std::string& kind) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"conj1", {"mu0", "tau0", "tau_common"}},
      {"conj2", {"mu0", "tau0", "alpha0", "beta0"}},
      {"nonconj", {"a0", "b0", "alpha0", "beta0"}},
      {"niw", {"mu0", "r0", "nu0", "S0"}},
  };
  const auto it = keys.find(kind);
  if (it == keys.end()) throw ConfigError("config: unknown model kind '" + kind + "'");
  return it->second;
}

bool is_auto(const json& v) { return v.is_string() && v.get<std::string>() == "auto"; }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "' in " + where);
  }
}

double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return j.get<double>();
}

long integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
  return j.get<long>();
}

json tilt_to_json(const TiltingFunction& f) {
  return std::visit(
      [](const auto& t) -> json {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, tilt::NormalizedStable>) {
          return {{"kind", "ns"}};
        } else if constexpr (std::is_same_v<T, tilt::GeneralizedGamma>) {
          return {{"kind", "ngg"}, {"tau", t.tau}};
        } else if constexpr (std::is_same_v<T, tilt::PitmanYor>) {
          return {{"kind", "py"}, {"theta", t.theta}};
        } else {
          return {{"kind", "gt"}, {"theta", t.theta}, {"eta", t.eta}};
        }
      },
      f.variant());
}

TiltingFunction tilt_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ConfigError("config: tilt needs a string 'kind'");
  }
  const std::string kind = j["kind"].get<std::string>();
  const auto need = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config: tilt '") + kind + "' needs '" + key + "'");
    return number(j[key], key);
  };
  if (kind == "ns") {
    check_keys(j, {"kind"}, "tilt");
    return TiltingFunction::ns();
  }
  if (kind == "ngg") {
    check_keys(j, {"kind", "tau"}, "tilt");
    return TiltingFunction::ngg(need("tau"));
  }
  if (kind == "py") {
    check_keys(j, {"kind", "theta"}, "tilt");
    return TiltingFunction::py(need("theta"));
  }
  if (kind == "gt") {
    check_keys(j, {"kind", "theta", "eta"}, "tilt");
    return TiltingFunction::gt(need("theta"), need("eta"));
  }
  throw ConfigError("config: unknown tilt kind '" + kind + "'");
}

}  // namespace

void RunConfig::validate() const {
  const auto& keys = model_keys(model);
  check_keys(model_params, keys, "model");
  for (const auto& [k, v] : model_params.items()) {
    if (is_auto(v) || v.is_number()) continue;
    if (model == "niw" && (k == "mu0" || k == "S0") && v.is_array()) continue;
    throw ConfigError("config: model parameter '" + k + "' must be a number or \"auto\"");
  }
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
    throw ConfigError("config: need iterations > burn_in >= 0");
  }
  if (thin < 1) throw ConfigError("config: thin must be at least 1");
  if (M < 1) throw ConfigError("config: M must be at least 1");
  if (chains < 1) throw ConfigError("config: chains must be at least 1");
  if (sigma && !(*sigma > 0.0 && *sigma < 1.0)) throw ConfigError("config: sigma must lie in (0, 1)");
  if (!(sigma_prior.a > 0.0) || !(sigma_prior.b > 0.0)) {
    throw ConfigError("config: sigma prior parameters must be positive");
  }
  if (!(slice_L > 0.0) || !(slice_E > 0.0)) throw ConfigError("config: slice L and E must be positive");
  try {
    quad.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (pca_components && *pca_components < 1) throw ConfigError("config: pca_components must be positive");
  if (marginalize && model == "nonconj") {
    throw ConfigError("config: marginalize needs a conjugate model");
  }
  try {
    tilt.validate(StableIndex(sigma.value_or(0.5)));
  } catch (const DomainError& e) {
    if (sigma) throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig config_from_json(const json& j) {
  check_keys(j,
             {"model", "tilt", "sigma", "sigma_prior", "iterations", "burn_in", "thin", "M", "seed",
              "chains", "marginalize", "slice", "quadrature", "pca_components"},
             "config");
  RunConfig c;
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object() || !m.contains("kind") || !m["kind"].is_string()) {
      throw ConfigError("config: model needs a string 'kind'");
    }
    c.model = m["kind"].get<std::string>();
    c.model_params = m;
    c.model_params.erase("kind");
  }
  if (j.contains("tilt")) c.tilt = tilt_from_json(j["tilt"]);
  if (j.contains("sigma")) {
    const json& s = j["sigma"];
    if (s.is_string() && s.get<std::string>() == "infer") {
      c.sigma.reset();
    } else {
      c.sigma = number(s, "sigma");
    }
  }
  if (j.contains("sigma_prior")) {
    check_keys(j["sigma_prior"], {"a", "b"}, "sigma_prior");
    if (j["sigma_prior"].contains("a")) c.sigma_prior.a = number(j["sigma_prior"]["a"], "a");
    if (j["sigma_prior"].contains("b")) c.sigma_prior.b = number(j["sigma_prior"]["b"], "b");
  }
  if (j.contains("iterations")) c.iterations = integer(j["iterations"], "iterations");
  if (j.contains("burn_in")) c.burn_in = integer(j["burn_in"], "burn_in");
  if (j.contains("thin")) c.thin = integer(j["thin"], "thin");
  if (j.contains("M")) c.M = static_cast<int>(integer(j["M"], "M"));
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("chains")) c.chains = static_cast<int>(integer(j["chains"], "chains"));
  if (j.contains("marginalize")) {
    if (!j["marginalize"].is_boolean()) throw ConfigError("config: 'marginalize' must be a boolean");
    c.marginalize = j["marginalize"].get<bool>();
  }
  if (j.contains("slice")) {
    check_keys(j["slice"], {"L", "E"}, "slice");
    if (j["slice"].contains("L")) c.slice_L = number(j["slice"]["L"], "L");
    if (j["slice"].contains("E")) c.slice_E = number(j["slice"]["E"], "E");
  }
  if (j.contains("quadrature")) {
    const json& q = j["quadrature"];
    check_keys(q, {"rel_tol", "abs_tol", "max_subdivisions"}, "quadrature");
    if (q.contains("rel_tol")) c.quad.rel_tol = number(q["rel_tol"], "rel_tol");
    if (q.contains("abs_tol")) c.quad.abs_tol = number(q["abs_tol"], "abs_tol");
    if (q.contains("max_subdivisions")) {
      c.quad.max_subdivisions = static_cast<int>(integer(q["max_subdivisions"], "max_subdivisions"));
    }
  }
  if (j.contains("pca_components") && !j["pca_components"].is_null()) {
    c.pca_components = static_cast<int>(integer(j["pca_components"], "pca_components"));
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json m = c.model_params;
  m["kind"] = c.model;
  json j{
      {"model", m},
      {"tilt", tilt_to_json(c.tilt)},
      {"sigma_prior", {{"a", c.sigma_prior.a}, {"b", c.sigma_prior.b}}},
      {"iterations", c.iterations},
      {"burn_in", c.burn_in},
      {"thin", c.thin},
      {"M", c.M},
      {"seed", c.seed},
      {"chains", c.chains},
      {"marginalize", c.marginalize},
      {"slice", {{"L", c.slice_L}, {"E", c.slice_E}}},
      {"quadrature",
       {{"rel_tol", c.quad.rel_tol},
        {"abs_tol", c.quad.abs_tol},
        {"max_subdivisions", c.quad.max_subdivisions}}},
  };
  j["sigma"] = c.sigma ? json(*c.sigma) : json("infer");
  j["pca_components"] = c.pca_components ? json(*c.pca_components) : json(nullptr);
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

namespace {

LikelihoodModel::Variant resolve_variant(RunConfig& c, const Dataset& data) {
  if (data.n() == 0 || data.d() == 0) throw PreconditionError("resolve_model: empty data");
  const Eigen::VectorXd mean = data.values.colwise().mean();
  const Eigen::VectorXd range = data.values.colwise().maxCoeff() - data.values.colwise().minCoeff();
  const double max_range = range.maxCoeff();
  const auto univ = [&] {
    if (data.d() != 1) {
      throw ConfigError("config: model '" + c.model + "' needs one column, data have " +
                        std::to_string(data.d()));
    }
  };
  json& p = c.model_params;
  const auto scalar = [&](const std::string& key, const auto& fallback) {
    if (!p.contains(key) || is_auto(p[key])) p[key] = fallback();
    return number(p[key], key);
  };
  const auto range_based = [&](double (*f)(double)) {
    return [&, f] {
      if (!(max_range > 0.0)) throw ConfigError("config: automatic hyperparameters need a non-zero data range");
      return f(max_range);
    };
  };
  const auto one = [] { return 1.0; };
  const auto mean0 = [&] { return mean(0); };
  if (c.model == "conj1") {
    univ();
    return model::UnivConjI{scalar("mu0", mean0),
                            scalar("tau0", range_based([](double r) { return 1.0 / (r * r); })),
                            scalar("tau_common", range_based([](double r) { return 16.0 / (r * r); }))};
  }
  if (c.model == "conj2") {
    univ();
    return model::UnivConjII{scalar("mu0", mean0),
                             scalar("tau0", range_based([](double r) { return 1.0 / (r * r); })),
                             scalar("alpha0", one), scalar("beta0", one)};
  }
  if (c.model == "nonconj") {
    univ();
    return model::UnivNonConj{scalar("a0", one), scalar("b0", one), scalar("alpha0", one),
                              scalar("beta0", one)};
  }
  const auto d = static_cast<Eigen::Index>(data.d());
  model::MvNiw m;
  if (!p.contains("mu0") || is_auto(p["mu0"])) {
    p["mu0"] = std::vector<double>(mean.data(), mean.data() + d);
  } else if (p["mu0"].is_number()) {
    p["mu0"] = std::vector<double>(static_cast<std::size_t>(d), p["mu0"].get<double>());
  }
  if (!p["mu0"].is_array() || static_cast<Eigen::Index>(p["mu0"].size()) != d) {
    throw ConfigError("config: mu0 must have one entry per column");
  }
  m.mu0.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) m.mu0(i) = number(p["mu0"][static_cast<std::size_t>(i)], "mu0");
  m.r0 = scalar("r0", one);
  m.nu0 = scalar("nu0", [&] { return static_cast<double>(d) + 3.0; });
  if (!p.contains("S0") || is_auto(p["S0"])) p["S0"] = range_based([](double r) { return r; })();
  m.S0 = Eigen::MatrixXd::Zero(d, d);
  if (p["S0"].is_number()) {
    m.S0.diagonal().setConstant(p["S0"].get<double>());
  } else {
    const json& s = p["S0"];
    if (!s.is_array() || static_cast<Eigen::Index>(s.size()) != d) throw ConfigError("config: S0 must be d x d");
    for (Eigen::Index i = 0; i < d; ++i) {
      const json& rowj = s[static_cast<std::size_t>(i)];
      if (!rowj.is_array() || static_cast<Eigen::Index>(rowj.size()) != d) {
        throw ConfigError("config: S0 must be d x d");
      }
      for (Eigen::Index k = 0; k < d; ++k) m.S0(i, k) = number(rowj[static_cast<std::size_t>(k)], "S0");
    }
  }
  return m;
}

}  // namespace

LikelihoodModel resolve_model(RunConfig& c, const Dataset& data) {
  c.validate();
  auto v = resolve_variant(c, data);
  try {
    return LikelihoodModel(std::move(v));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ChainConfig chain_config(const RunConfig& c, int chain) {
  ChainConfig cc;
  cc.iterations = c.iterations;
  cc.burn_in = c.burn_in;
  cc.thin = c.thin;
  cc.seed = derive_seed(c.seed, static_cast<std::size_t>(chain));
  cc.sigma = c.sigma.value_or(0.5);
  cc.sampler.M = c.M;
  cc.sampler.marginalize = c.marginalize;
  cc.sampler.update_sigma = !c.sigma.has_value();
  cc.sampler.sigma_prior = c.sigma_prior;
  cc.sampler.slice.initial_width = c.slice_L;
  cc.sampler.slice.expansion_step = c.slice_E;
  cc.sampler.quad = c.quad;
  return cc;
}

// ---------------------------------------------------------------------------
// Traces

json record_to_json(const ChainRecord& r) {
  json params = json::array();
  for (const auto& p : r.params) {
    if (const auto* u = std::get_if<UnivParams>(&p)) {
      params.push_back({{"mu", u->mu}, {"tau", u->tau}});
    } else {
      const auto& m = std::get<MvParams>(p);
      json rows = json::array();
      for (Eigen::Index i = 0; i < m.sigma.rows(); ++i) {
        rows.push_back(json::array());
        for (Eigen::Index k = 0; k < m.sigma.cols(); ++k) rows.back().push_back(m.sigma(i, k));
      }
      params.push_back({{"mu", std::vector<double>(m.mu.data(), m.mu.data() + m.mu.size())},
                        {"sigma", rows}});
    }
  }
  return {{"type", "record"},
          {"iteration", r.iteration},
          {"K", r.K},
          {"assignments", r.assignments},
          {"aux", {{"w", r.aux.w}, {"r", r.aux.r}, {"z", r.aux.z}, {"sigma", r.aux.sigma}}},
          {"params", params}};
}

ChainRecord record_from_json(const json& j) {
  ChainRecord r;
  r.iteration = j.at("iteration").get<long>();
  r.K = j.at("K").get<int>();
  r.assignments = j.at("assignments").get<std::vector<int>>();
  const json& a = j.at("aux");
  r.aux = AuxState{a.at("w").get<double>(), a.at("r").get<double>(), a.at("z").get<double>(),
                   a.at("sigma").get<double>()};
  for (const auto& p : j.at("params")) {
    if (p.at("mu").is_number()) {
      r.params.emplace_back(UnivParams{p["mu"].get<double>(), p.at("tau").get<double>()});
    } else {
      const auto mu = p["mu"].get<std::vector<double>>();
      const auto rows = p.at("sigma").get<std::vector<std::vector<double>>>();
      const auto d = static_cast<Eigen::Index>(mu.size());
      Eigen::MatrixXd s(d, d);
      if (static_cast<Eigen::Index>(rows.size()) != d) throw InputError("trace: sigma must be d x d");
      for (Eigen::Index i = 0; i < d; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
          throw InputError("trace: sigma must be d x d");
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          s(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
      }
      r.params.emplace_back(MvParams::make(Eigen::Map<const Eigen::VectorXd>(mu.data(), d), s));
    }
  }
  return r;
}

TraceWriter::TraceWriter(std::ostream& out, const RunConfig& config, int chain, const Dataset& data)
    : out_(out) {
  const json header{
      {"type", "header"},
      {"format", "pkmix-trace"},
      {"version", 1},
      {"chain", chain},
      {"chain_seed", derive_seed(config.seed, static_cast<std::size_t>(chain))},
      {"config", config_to_json(config)},
      {"data",
       {{"n", data.n()},
        {"d", data.d()},
        {"columns", data.columns},
        {"provenance", data.provenance},
        {"explained_variance", data.explained_variance}}},
  };
  out_ << header.dump() << '\n';
}

void TraceWriter::write(const ChainRecord& r) { out_ << record_to_json(r).dump() << '\n'; }

void TraceWriter::write_failure(const ChainFailure& e) {
  const json j{{"type", "failure"},
               {"iteration", e.iteration},
               {"message", e.what()},
               {"state", record_to_json(e.state)}};
  out_ << j.dump() << '\n';
  out_.flush();
}

TraceFile read_trace(std::istream& in, const std::string& source) {
  TraceFile t;
  std::string line;
  long row = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header" || j.at("format") != "pkmix-trace") {
          throw InputError("first line is not a trace header");
        }
        t.header = j;
        t.config = config_from_json(j.at("config"));
        t.trace.iterations = t.config.iterations;
        t.trace.burn_in = t.config.burn_in;
        t.trace.thin = t.config.thin;
        have_header = true;
      } else if (type == "record") {
        t.trace.records.push_back(record_from_json(j));
      } else if (type == "failure") {
        t.failure_message = j.at("message").get<std::string>();
        t.failure_state = record_from_json(j.at("state"));
      } else {
        throw InputError("unknown line type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw InputError(source + ":" + std::to_string(row) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(row) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw InputError(source + ":" + std::to_string(row) + ": " + e.what());
    }
  }
  if (!have_header) throw InputError(source + ": empty trace");
  return t;
}

}  // namespace pkmix
