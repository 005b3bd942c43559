#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfdal/active.hpp"
#include "mfdal/dmfnp.hpp"
#include "mfdal/pde.hpp"

namespace mfdal {

struct PassiveConfig {
  PassiveSetting setting = PassiveSetting::full;
  std::vector<int> sizes;  // per level; empty means 64 at every level
  int n_reference = 8;
  int test_size = 512;
};

/// One declarative experiment. Every field has a default; see the README
/// for the JSON layout.
struct ExperimentConfig {
  std::string task = "heat";
  int levels = 2;
  std::vector<double> costs;  // empty: node-count ratios
  std::string mode = "passive";  // passive | active
  std::vector<std::string> methods = {"dmfdal"};  // dmfdal | sfnp | mfnp
  std::vector<std::string> acquisitions = {"mf_lig"};  // active mode
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "out";
  bool record_wall_time = false;  // seconds column in metrics.csv
  bool write_residuals = true;
  PassiveConfig passive;
  ActiveConfig active;
  SurrogateConfig model;

  TaskSpec task_spec() const;
  /// Throws DomainError for invalid values and method/mode combinations.
  void validate() const;

  /// Unknown keys, wrong types and invalid values are errors (ParseError
  /// for structure, DomainError for values).
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Results of one (method, acquisition) cell across seeds.
struct CellResult {
  std::string name;
  std::string method;
  std::string acquisition;  // empty in passive mode
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_nrmse;  // highest level, NaN for failed seeds
  std::vector<std::pair<std::uint64_t, std::string>> errors;

  bool ok() const { return errors.empty(); }
};

struct ExperimentSummary {
  std::vector<CellResult> cells;
  bool ok() const;
  nlohmann::json to_json() const;
};

/// Runs every cell and seed, writing <output_dir>/<cell>/seed_<s>/metrics.csv
/// (plus residuals.csv and timing.csv) and <output_dir>/summary.json. Cell
/// failures are recorded, not thrown; configuration errors throw.
ExperimentSummary run_experiment(const ExperimentConfig& config);

/// Header of metrics.csv for K levels.
std::string metrics_header(int levels);
std::string metrics_row(const IterationRecord& r);

}  // namespace mfdal
