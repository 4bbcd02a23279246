#pragma once

#include "csv_table.hpp"

#include "hglmm/covariance.hpp"
#include "hglmm/datamodels.hpp"
#include "hglmm/laplace.hpp"
#include "hglmm/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hglmm::cli {

struct ComponentConfig {
  std::string type;  ///< nugget, random_intercept, ar1, exponential, car, sar
  std::string label;
  std::string group;
  std::string time;
  std::string region;
  std::vector<std::string> coords;
  bool nugget = false;
  std::filesystem::path edges;
  bool allow_negative_rho = false;
};

struct PredictionConfig {
  std::filesystem::path data;
  std::string id;
};

/// Parsed configuration file. Paths are resolved against the file's directory.
struct ModelConfig {
  std::filesystem::path source;
  bool has_model = false;

  std::filesystem::path data;
  std::string id;
  std::string response;
  std::string trials;
  datamodels::Family family;
  bool intercept = true;
  std::vector<std::string> fixed;
  std::vector<ComponentConfig> covariance;
  laplace::Mode mode = laplace::Mode::reml;
  std::map<std::string, std::pair<double, double>> bounds;
  std::map<std::string, double> initial;
  int max_evals = 10000;

  std::uint64_t seed = 0;
  double level = 0.9;
  std::filesystem::path out_dir;
  std::optional<PredictionConfig> prediction;
  std::optional<simulate::ExperimentConfig> experiment;

  /// p-values from the normal ("normal") or t with n - p df ("t").
  std::string p_values = "normal";

  /// Canonical text of the model-defining keys and of the experiment block,
  /// used for the config hash.
  std::string canonical_model;
  std::string canonical_experiment;
};

ModelConfig load_config(const std::filesystem::path& path);
ModelConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                         const std::string& source);

struct ModelInputs {
  CsvTable table;
  std::vector<std::string> ids;
  datamodels::DataVector data;
  Matrix x;
  std::vector<std::string> x_names;
  covariance::CovarianceSpec spec;
};

ModelInputs build_inputs(const ModelConfig& config);

struct PredictionInputs {
  std::vector<std::string> ids;
  Matrix x_u;
  covariance::PredictionMeta meta;
};

PredictionInputs build_prediction(const ModelConfig& config, const ModelInputs& inputs);

/// Design column for a term written as col, col^k or products joined by ':'.
Vector design_term(const CsvTable& table, const std::string& term);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

/// Hash of the model keys (with `mode` as finally used) and every input file.
std::string config_hash(const ModelConfig& config, laplace::Mode mode);

}  // namespace hglmm::cli
