// Apache License, Version 2.0, refer to LICENSE.txt

// Data ingestion, PCA, run configuration and trace files.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pkmix/likelihoods.hpp"
#include "pkmix/sampler.hpp"
#include "pkmix/tilting.hpp"

namespace pkmix {

// Malformed input file: unparseable cell, missing value, ragged row.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration that cannot be turned into a valid run.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct Dataset {
  Eigen::MatrixXd values;            // n x d
  std::vector<std::string> columns;  // empty without a header
  std::string provenance;
  std::vector<double> explained_variance;  // per retained component, PCA only

  std::size_t n() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(values.cols()); }
  std::vector<std::vector<double>> rows() const;
  double explained_variance_total() const;
};

struct CsvOptions {
  char delimiter = ',';  // ' ' splits on any run of blanks and tabs
  bool header = true;
  // Selected columns, by header name or 0-based index; all when both empty.
  std::vector<std::string> column_names;
  std::vector<int> column_indices;
};

// Errors carry "source:row:column" with 1-based file positions.
Dataset parse_csv(std::istream& in, const CsvOptions& opt, const std::string& source = "<input>");
Dataset load_csv(const std::string& path, const CsvOptions& opt = {});

// Scores on the top-k principal directions of the centred columns.  Each
// direction's sign is fixed so its largest-magnitude loading is positive.
Dataset pca_project(const Dataset& data, int k);

// Dense CSV without a header.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& source = "<input>");

struct RunConfig {
  // Model kind ("conj1", "conj2", "nonconj", "niw") and hyperparameters.
  // Missing keys and the string "auto" are resolved from the data.
  std::string model = "conj1";
  nlohmann::json model_params = nlohmann::json::object();
  TiltingFunction tilt = TiltingFunction::ngg(1.0);
  std::optional<double> sigma = 0.5;  // empty: inferred
  SigmaPrior sigma_prior;
  long iterations = 1000;
  long burn_in = 0;
  long thin = 1;
  int M = 2;
  std::uint64_t seed = 1;
  int chains = 1;
  bool marginalize = false;
  double slice_L = 1.0;
  double slice_E = 1.0;
  QuadratureConfig quad;
  std::optional<int> pca_components;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

// Replaces every automatic hyperparameter of `c` by its value for `data` and
// returns the model.  Univariate defaults: mu0 = mean, tau0 = 1/range^2,
// tau_common = (range/4)^-2, alpha0 = beta0 = a0 = b0 = 1.  NIW: mu0 = mean,
// r0 = 1, nu0 = d + 3, S0 diagonal with the largest column range.
LikelihoodModel resolve_model(RunConfig& c, const Dataset& data);

// Chain c runs with seed derive_seed(config seed, c).
ChainConfig chain_config(const RunConfig& c, int chain);

// Trace files: a header line, then one line per recorded state, and a
// failure line when the chain stopped early.
nlohmann::json record_to_json(const ChainRecord& r);
ChainRecord record_from_json(const nlohmann::json& j);

class TraceWriter {
 public:
  // `config` should be the resolved configuration.
  TraceWriter(std::ostream& out, const RunConfig& config, int chain, const Dataset& data);
  void write(const ChainRecord& r);
  void write_failure(const ChainFailure& e);

 private:
  std::ostream& out_;
};

struct TraceFile {
  nlohmann::json header;
  RunConfig config;
  ChainTrace trace;
  std::optional<ChainRecord> failure_state;
  std::string failure_message;
};

TraceFile read_trace(std::istream& in, const std::string& source = "<trace>");

}  // namespace pkmix
