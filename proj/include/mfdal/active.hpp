#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfdal/acquisition.hpp"
#include "mfdal/dmfnp.hpp"
#include "mfdal/pde.hpp"

namespace mfdal {

struct ActiveConfig {
  int iterations = 10;
  double budget_per_iteration = 10.0;
  int pool_size = 256;  // fresh candidates per fidelity per iteration
  std::string acquisition = "mf_lig";
  int initial_epochs = -1;  // < 0: the model config's epochs
  int retrain_epochs = 500;
  bool cold_start = false;  // retrain from fresh weights with initial_epochs
  int n_reference = 8;
  int test_size = 512;
  int n_y_samples = 8;
  bool strict_budget = false;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double cumulative_cost = 0.0;  // queried cost, reference data excluded
  std::vector<double> nrmse;     // per level, on the test set
  std::vector<int> n_queried;    // cumulative queries per level
  double seconds = 0.0;          // wall time of this iteration
};

struct RunHistory {
  std::vector<IterationRecord> records;  // iteration 0 is the reference model
  std::vector<QueryBatch> batches;
};

/// Held-out inputs and their true outputs at every level.
struct TestSet {
  Eigen::MatrixXd inputs;
  std::vector<Eigen::MatrixXd> outputs;
};

/// `size` uniform scenarios from the test-set substream of `seed`.
TestSet make_test_set(const TaskSpec& task, int size, std::uint64_t seed);

/// Fresh uniform candidates, `per_level` at each fidelity, for `iteration`.
std::vector<QueryCandidate> make_pool(const TaskSpec& task, int per_level,
                                      std::uint64_t seed, int iteration);

/// Per-level nRMSE of plug-in predictions conditioned on `data`.
std::vector<double> evaluate_levels(const SurrogateModel& model,
                                    const MultiFidelityDataset& data,
                                    const TestSet& test);

/// Called after each record with the dataset and model at that point.
using RecordCallback = std::function<void(const IterationRecord& record,
                                          const MultiFidelityDataset& data,
                                          const SurrogateModel& model)>;

/// References at every level, train, then per iteration: pool, greedy batch,
/// true simulator labels, warm (or cold) retrain, evaluate.
RunHistory run_active(const TaskSpec& task, SurrogateConfig model_config,
                      const ActiveConfig& config, std::uint64_t seed,
                      const RecordCallback& on_record = {});

enum class PassiveSetting { full, nested, non_nested };

std::string to_string(PassiveSetting s);
PassiveSetting passive_setting_from_string(const std::string& s);

/// full: identical inputs at every level (sizes equal). nested: level k
/// inputs are the first sizes[k] of level k-1 (sizes non-increasing).
/// non_nested: levels share only the first n_reference scenarios. In every
/// setting the first n_reference scenarios form the reference set.
MultiFidelityDataset build_passive_setting(const TaskSpec& task,
                                           PassiveSetting setting,
                                           const std::vector<int>& sizes,
                                           int n_reference, std::uint64_t seed);

}  // namespace mfdal
