// Apache License, Version 2.0, refer to LICENSE.txt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "pkmix/cli.hpp"
#include "pkmix/cli_io.hpp"
#include "pkmix/diagnostics.hpp"
#include "pkmix/errors.hpp"

using namespace pkmix;
namespace fs = std::filesystem;

namespace {

Dataset csv(const std::string& text, CsvOptions opt = {}) {
  std::istringstream in(text);
  return parse_csv(in, opt, "t.csv");
}

std::string error_of(const std::string& text, CsvOptions opt = {}) {
  try {
    csv(text, opt);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pkmix_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pkmix");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string two_groups_csv(int n) {
  std::ostringstream s;
  s << "x\n";
  Rng rng(2);
  for (int i = 0; i < n; ++i) s << (i % 2 ? 10.0 : 20.0) + sample_normal(rng) << '\n';
  return s.str();
}

}  // namespace

TEST_CASE("csv ingestion") {
  const auto d = csv("a,b\n1,2\n3,4.5\n-1e3, 7\n");
  CHECK(d.n() == 3);
  CHECK(d.d() == 2);
  CHECK(d.columns == std::vector<std::string>{"a", "b"});
  CHECK(d.values(2, 0) == -1000.0);
  CHECK(d.values(1, 1) == 4.5);

  CsvOptions by_name;
  by_name.column_names = {"b"};
  CHECK(csv("a,b\n1,2\n3,4\n", by_name).values.col(0) == Eigen::Vector2d(2, 4));
  CsvOptions by_index;
  by_index.header = false;
  by_index.column_indices = {1, 0};
  const auto swapped = csv("1,2\n3,4\n", by_index);
  CHECK(swapped.values(0, 0) == 2.0);
  CHECK(swapped.values(0, 1) == 1.0);
  CsvOptions ws;
  ws.delimiter = ' ';
  ws.header = false;
  const auto w = csv("  9172\t 9350\n\n9483 9558  \r\n", ws);
  CHECK(w.n() == 2);
  CHECK(w.values(1, 1) == 9558.0);
  CHECK(csv("# comment\nx\n\"1\"\n").values(0, 0) == 1.0);

  const std::string bad = error_of("a,b\n1,2\n3,oops\n");
  CHECK(bad.find("t.csv:3:2") != std::string::npos);
  CHECK(bad.find("oops") != std::string::npos);
  CHECK(bad.find("'b'") != std::string::npos);
  const std::string missing = error_of("a,b\n1,\n");
  CHECK(missing.find("missing value at t.csv:2:2") != std::string::npos);
  CHECK(error_of("a,b\n1,NA\n").find("missing") != std::string::npos);
  CHECK(error_of("a,b\n1,2,3\n").find("expected 2 fields") != std::string::npos);
  CHECK(error_of("a,b\n").find("no data rows") != std::string::npos);
  CHECK(error_of("a,b\n1,2\n", by_index).find("non-numeric cell 'b' at t.csv:1:2") != std::string::npos);
  CsvOptions index_with_header;
  index_with_header.column_indices = {1};
  CHECK(csv("a,b\n1,2\n", index_with_header).columns == std::vector<std::string>{"b"});
  CsvOptions nope;
  nope.column_names = {"c"};
  CHECK(error_of("a,b\n1,2\n", nope).find("no column named 'c'") != std::string::npos);
  CHECK(error_of("a\n1e400\n").find("non-numeric") != std::string::npos);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), InputError);
}

TEST_CASE("pca") {
  // Orthogonal centred columns: the scores are the data up to sign.
  Dataset d;
  d.values.resize(4, 2);
  d.values << 3, 0, -3, 0, 0, 1, 0, -1;
  const auto p = pca_project(d, 2);
  CHECK((p.values.col(0).cwiseAbs() - d.values.col(0).cwiseAbs()).norm() < 1e-12);
  CHECK((p.values.col(1).cwiseAbs() - d.values.col(1).cwiseAbs()).norm() < 1e-12);
  CHECK(p.explained_variance[0] == doctest::Approx(0.9));

  // Rank one.
  Rng rng(4);
  Dataset r;
  r.values.resize(30, 5);
  const Eigen::VectorXd dir = (Eigen::VectorXd(5) << 1, -2, 0.5, 3, 1).finished();
  for (int i = 0; i < 30; ++i) r.values.row(i) = (sample_normal(rng) * dir).transpose() + Eigen::RowVectorXd::Constant(5, 7.0);
  const auto r1 = pca_project(r, 1);
  CHECK(std::abs(r1.explained_variance_total() - 1.0) < 1e-10);

  // Against the SVD of the centred data.
  Dataset g;
  g.values.resize(50, 6);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 6; ++j) g.values(i, j) = sample_normal(rng) * (j + 1) + (j == 2 ? g.values(i, 0) : 0.0);
  }
  const Eigen::MatrixXd c = g.values.rowwise() - g.values.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinV);
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  const auto g3 = pca_project(g, 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(g3.explained_variance[static_cast<std::size_t>(k)] == doctest::Approx(s2(k) / s2.sum()).epsilon(1e-10));
    const double agree = std::abs(g3.values.col(k).dot(c * svd.matrixV().col(k))) /
                         (g3.values.col(k).norm() * (c * svd.matrixV().col(k)).norm());
    CHECK(agree == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(g3.columns == std::vector<std::string>{"PC1", "PC2", "PC3"});
  CHECK_THROWS_AS(pca_project(g, 0), DomainError);
  CHECK_THROWS_AS(pca_project(g, 7), DomainError);
}

TEST_CASE("matrix csv round trip") {
  Eigen::MatrixXd m(2, 3);
  m << 0.1, 1.0 / 3.0, 1e-300, -2.5, 7.0, 0.2;
  std::stringstream s;
  write_matrix_csv(s, m);
  CHECK(read_matrix_csv(s) == m);
}

TEST_CASE("run configuration") {
  const auto j = nlohmann::json::parse(R"({
    "model": {"kind": "conj2", "mu0": "auto", "alpha0": 2},
    "tilt": {"kind": "gt", "theta": 1.5, "eta": 0.25},
    "sigma": "infer", "sigma_prior": {"a": 2, "b": 3},
    "iterations": 500, "burn_in": 100, "thin": 5, "M": 4, "seed": 18446744073709551615,
    "chains": 3, "marginalize": true, "slice": {"L": 0.5, "E": 2},
    "quadrature": {"rel_tol": 1e-9, "abs_tol": 1e-13, "max_subdivisions": 300},
    "pca_components": 2})");
  const RunConfig c = config_from_json(j);
  CHECK(c.model == "conj2");
  CHECK_FALSE(c.sigma.has_value());
  CHECK(c.seed == 18446744073709551615ULL);
  CHECK(c.tilt == TiltingFunction::gt(1.5, 0.25));
  CHECK(config_from_json(config_to_json(c)) == c);
  const RunConfig def = config_from_json(nlohmann::json::object());
  CHECK(def == RunConfig{});
  CHECK(config_from_json(config_to_json(def)) == def);

  const auto bad = [](const char* text) {
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(text)), ConfigError);
  };
  bad(R"({"iterations": 10, "burn_in": 10})");
  bad(R"({"thin": 0})");
  bad(R"({"M": 0})");
  bad(R"({"chains": 0})");
  bad(R"({"sigma": 1.0})");
  bad(R"({"sigma": "maybe"})");
  bad(R"({"itterations": 5})");
  bad(R"({"model": {"kind": "conj1", "alpha0": 1}})");
  bad(R"({"model": {"kind": "mystery"}})");
  bad(R"({"model": {"kind": "conj1", "mu0": "mean"}})");
  bad(R"({"tilt": {"kind": "py"}})");
  bad(R"({"tilt": {"kind": "py", "theta": -0.6}, "sigma": 0.5})");
  bad(R"({"model": {"kind": "nonconj"}, "marginalize": true})");
  bad(R"({"quadrature": {"abs_tol": 0}})");
  bad(R"({"iterations": 2.5})");
  bad(R"({"seed": -1})");
}

TEST_CASE("automatic hyperparameters") {
  Dataset d;
  d.values.resize(4, 1);
  d.values << 2, 10, 4, 6;
  RunConfig c;
  c.model_params = {{"tau0", 0.5}};
  const auto m = std::get<model::UnivConjI>(resolve_model(c, d).variant());
  CHECK(m.mu0 == 5.5);
  CHECK(m.tau0 == 0.5);
  CHECK(m.tau_common == doctest::Approx(1.0 / 4.0));  // std = range / 4 = 2
  CHECK(c.model_params["mu0"] == 5.5);
  RunConfig again = c;
  CHECK(resolve_model(again, d).variant() == resolve_model(c, d).variant());
  CHECK(again == c);
  CHECK(config_from_json(config_to_json(c)) == c);

  RunConfig c2;
  c2.model = "conj2";
  const auto m2 = std::get<model::UnivConjII>(resolve_model(c2, d).variant());
  CHECK(m2.tau0 == doctest::Approx(1.0 / 64.0));
  CHECK(m2.alpha0 == 1.0);
  CHECK(m2.beta0 == 1.0);

  Dataset mv;
  mv.values.resize(3, 2);
  mv.values << 0, 0, 1, 5, 2, 1;
  RunConfig cn;
  cn.model = "niw";
  const auto n = std::get<model::MvNiw>(resolve_model(cn, mv).variant());
  CHECK(n.nu0 == 5.0);
  CHECK(n.r0 == 1.0);
  CHECK(n.mu0 == Eigen::Vector2d(1.0, 2.0));
  CHECK(n.S0 == Eigen::Matrix2d(Eigen::Vector2d(5.0, 5.0).asDiagonal()));
  CHECK(config_from_json(config_to_json(cn)) == cn);

  RunConfig wrong;
  CHECK_THROWS_AS(resolve_model(wrong, mv), ConfigError);
  Dataset flat;
  flat.values = Eigen::MatrixXd::Constant(3, 1, 2.0);
  RunConfig cf;
  CHECK_THROWS_AS(resolve_model(cf, flat), ConfigError);
  RunConfig neg;
  neg.model_params = {{"tau0", -1.0}};
  CHECK_THROWS_AS(resolve_model(neg, d), ConfigError);
}

TEST_CASE("trace round trip") {
  Rng rng(9);
  std::vector<std::vector<double>> uni;
  for (int i = 0; i < 15; ++i) uni.push_back({(i % 3) * 4.0 + sample_normal(rng)});
  std::vector<std::vector<double>> mv;
  for (int i = 0; i < 12; ++i) mv.push_back({sample_normal(rng) + (i % 2) * 5.0, sample_normal(rng)});
  struct Case {
    std::string model;
    bool marginalize;
    bool infer;
    const std::vector<std::vector<double>>* data;
  };
  for (const Case& k : {Case{"conj2", false, true, &uni}, Case{"conj1", true, false, &uni},
                        Case{"nonconj", false, false, &uni}, Case{"niw", false, false, &mv}}) {
    CAPTURE(k.model);
    Dataset d;
    d.values.resize(static_cast<Eigen::Index>(k.data->size()), static_cast<Eigen::Index>((*k.data)[0].size()));
    for (std::size_t i = 0; i < k.data->size(); ++i) {
      for (std::size_t j = 0; j < (*k.data)[0].size(); ++j) {
        d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*k.data)[i][j];
      }
    }
    RunConfig c;
    c.model = k.model;
    c.marginalize = k.marginalize;
    if (k.infer) c.sigma.reset();
    c.iterations = 40;
    c.burn_in = 10;
    c.thin = 3;
    const auto m = resolve_model(c, d);
    std::stringstream s;
    TraceWriter w(s, c, 0, d);
    const auto trace = run_chain(*k.data, m, c.tilt, chain_config(c, 0),
                                 [&](const ChainRecord& r) { w.write(r); });
    const TraceFile back = read_trace(s);
    CHECK(back.trace == trace);
    CHECK(back.config == c);
    CHECK(back.trace.records.size() == 10);
    CHECK(back.header["data"]["n"] == k.data->size());
    CHECK_FALSE(back.failure_state.has_value());
  }

  RunConfig c;
  Dataset d;
  d.values = Eigen::MatrixXd::Ones(2, 1);
  std::stringstream s;
  TraceWriter w(s, c, 1, d);
  ChainRecord r;
  r.iteration = 3;
  r.K = 1;
  r.assignments = {0, 0};
  r.params = {UnivParams{0.25, 2.0}};
  w.write(r);
  w.write_failure(ChainFailure("boom", 4, {}, r));
  const auto back = read_trace(s);
  REQUIRE(back.failure_state.has_value());
  CHECK(*back.failure_state == r);
  CHECK(back.failure_message == "boom");
  CHECK(back.header["chain"] == 1);

  std::istringstream empty("");
  CHECK_THROWS_AS(read_trace(empty), InputError);
  std::istringstream corrupt(s.str() + "{\"type\": \"record\", \"K\": }\n");
  try {
    read_trace(corrupt, "x.ndjson");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("x.ndjson:4") != std::string::npos);
  }
}

TEST_CASE("command line: eppf and prior-sim") {
  const auto r = cli({"eppf", "--n", "4", "--sigma", "0.5", "--tilt", "py", "--theta", "0.5",
                      "--check-normalization"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("sum = 1.000000") != std::string::npos);
  const auto q = cli({"eppf", "--n", "4", "--sigma", "0.3", "--tilt", "ngg", "--tau", "1",
                      "--check-normalization", "--quadrature"});
  CHECK(q.code == kExitOk);
  const auto e = cli({"eppf", "--n", "3", "--tilt", "ns", "--enumerate"});
  CHECK(e.code == kExitOk);
  CHECK(e.out.find("0,1,2\t") != std::string::npos);
  const auto one = cli({"eppf", "--partition", "0,0,1", "--tilt", "py", "--theta", "0.5"});
  CHECK(one.code == kExitOk);
  const double expect = log_eppf_py_closed(Partition({0, 0, 1}), StableIndex(0.5), 0.5);
  CHECK(std::stod(one.out.substr(one.out.find('\t') + 1)) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(cli({"eppf", "--n", "3", "--sigma", "1.5"}).code == kExitUsage);
  CHECK(cli({"eppf", "--n", "3", "--tilt", "py", "--theta", "-0.9"}).code == kExitUsage);
  CHECK(cli({"eppf", "--n", "3", "--tilt", "weird"}).code == kExitUsage);

  const auto a = cli({"prior-sim", "--n", "5", "--draws", "500", "--seed", "3"});
  const auto b = cli({"prior-sim", "--n", "5", "--draws", "500", "--seed", "3"});
  CHECK(a.code == kExitOk);
  CHECK(a.out == b.out);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("command line: fit, dendro, predict") {
  TempDir tmp("cli");
  write_file(tmp / "data.csv", two_groups_csv(30));
  write_file(tmp / "run.json",
             R"({"model": {"kind": "conj1"}, "tilt": {"kind": "ngg", "tau": 1}, "sigma": 0.5,
                 "iterations": 120, "burn_in": 20, "thin": 5, "chains": 2})");
  const std::vector<std::string> fit{"fit", "--config", tmp / "run.json", "--data", tmp / "data.csv",
                                     "--seed", "11", "--grid", "50", "--out"};
  auto fa = fit;
  fa.push_back(tmp / "a");
  auto fb = fit;
  fb.push_back(tmp / "b");
  const auto ra = cli(fa);
  REQUIRE(ra.code == kExitOk);
  REQUIRE(cli(fb).code == kExitOk);
  for (const char* f : {"trace_chain0.ndjson", "trace_chain1.ndjson", "coclustering.csv", "summary.tsv",
                        "k_histogram.tsv", "density.tsv", "config.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(tmp.path / "a" / f));
    CHECK(slurp(tmp / (std::string("a/") + f)) == slurp(tmp / (std::string("b/") + f)));
  }
  // Nothing written beside the output directories.
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(tmp.path)) top.insert(e.path().filename().string());
  CHECK(top == std::set<std::string>{"a", "b", "data.csv", "run.json"});

  std::ifstream tin(tmp / "a/trace_chain1.ndjson");
  const auto tf = read_trace(tin);
  CHECK(tf.trace.records.size() == 20);
  CHECK(tf.config.seed == 11);
  CHECK(tf.config.model_params["tau_common"].is_number());
  std::ifstream cin(tmp / "a/coclustering.csv");
  CHECK_NOTHROW(CoClusterMatrix::check(read_matrix_csv(cin)));

  const auto dr = cli({"dendro", "--matrix", tmp / "a/coclustering.csv", "--k", "2", "--out", tmp / "a/dendro"});
  CHECK(dr.code == kExitOk);
  CHECK(fs::exists(tmp.path / "a/dendro/merges.tsv"));
  CHECK(cli({"dendro", "--matrix", tmp / "a/coclustering.csv", "--k", "99"}).code == kExitUsage);

  const auto pr = cli({"predict", "--config", tmp / "run.json", "--data", tmp / "data.csv", "--kfold", "3",
                       "--iterations", "40", "--burn-in", "10", "--workers", "1", "--out", tmp / "p"});
  CHECK(pr.code == kExitOk);
  CHECK(pr.out.find("groups\t3") != std::string::npos);
  CHECK(cli({"predict", "--config", tmp / "run.json", "--data", tmp / "data.csv"}).code == kExitUsage);

  // Usage and configuration errors exit with 1.
  auto no_seed = fit;
  no_seed.erase(no_seed.begin() + 5, no_seed.begin() + 7);
  no_seed.push_back(tmp / "c");
  CHECK(cli(no_seed).code == kExitUsage);
  write_file(tmp / "bad.json", R"({"iterations": 10, "burn_in": 50})");
  CHECK(cli({"fit", "--config", tmp / "bad.json", "--data", tmp / "data.csv", "--seed", "1", "--out",
             tmp / "c"})
            .code == kExitUsage);
  CHECK(cli({"fit", "--config", tmp / "run.json", "--data", tmp / "missing.csv", "--seed", "1", "--out",
             tmp / "c"})
            .code == kExitUsage);

  // A quadrature budget too small for the GT normalizer fails mid-run.
  write_file(tmp / "tight.json",
             R"({"tilt": {"kind": "gt", "theta": 1, "eta": 1}, "sigma": "infer", "iterations": 20,
                 "quadrature": {"rel_tol": 1e-15, "abs_tol": 1e-300, "max_subdivisions": 1}})");
  const auto nf = cli({"fit", "--config", tmp / "tight.json", "--data", tmp / "data.csv", "--seed", "1",
                       "--out", tmp / "f"});
  CHECK(nf.code == kExitNumerical);
  std::ifstream fin(tmp / "f/trace_chain0.ndjson");
  const auto partial = read_trace(fin);
  CHECK(partial.failure_state.has_value());
  CHECK(partial.trace.records.size() < 20);
}
