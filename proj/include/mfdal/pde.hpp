#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mfdal {

enum class TaskName { heat, poisson };

std::string to_string(TaskName name);
TaskName task_name_from_string(const std::string& s);

/// A multi-fidelity simulation task: one PDE solved at several mesh
/// resolutions with increasing query cost.
struct TaskSpec {
  TaskName name = TaskName::heat;
  std::vector<int> levels;  // mesh resolution per fidelity, strictly increasing
  std::vector<double> costs;  // costs[0] == 1, strictly increasing
  Eigen::VectorXd lower;  // physical input range, per component
  Eigen::VectorXd upper;

  /// Heat task with 2 ({16, 32}) or 3 ({16, 32, 64}) fidelities.
  static TaskSpec heat(int n_levels = 2);
  static TaskSpec poisson(int n_levels = 2);
  static TaskSpec make(TaskName name, int n_levels);

  int num_levels() const { return static_cast<int>(levels.size()); }
  int input_dim() const { return static_cast<int>(lower.size()); }
  int output_dim(int level) const;
  std::vector<int> output_dims() const;

  /// Throws DomainError if any invariant is violated.
  void validate() const;
};

/// Node-count cost ratios (res_k / res_0)^2.
std::vector<double> node_count_costs(const std::vector<int>& levels);

/// A physical scenario parameter vector, range-checked at construction.
class ScenarioInput {
 public:
  ScenarioInput(const TaskSpec& task, Eigen::VectorXd x);
  const Eigen::VectorXd& values() const { return x_; }

 private:
  Eigen::VectorXd x_;
};

/// u_t = alpha * lap(u) on the unit square up to t = 1 with zero Dirichlet
/// boundary and u0 = a1 sin(pi s1) sin(pi s2) + a2 sin(2 pi s1) sin(pi s2).
/// x = (alpha, a1, a2). Backward Euler with 8 * resolution steps; returns
/// the interior grid (resolution x resolution), row-major with rows along s2.
Eigen::VectorXd solve_heat(const ScenarioInput& x, int resolution);

/// -lap(u) = s * exp(-25 |p - c|^2) with constant Dirichlet values
/// (b1 bottom, b2 right, b3 top, b4 left). x = (b1, b2, b3, b4, s). Returns
/// the full grid including boundary nodes (resolution x resolution),
/// row-major with rows along s2. Corners take the mean of their two edges.
Eigen::VectorXd solve_poisson(const ScenarioInput& x, int resolution);

namespace detail {

/// 5-point finite-difference Poisson solve on an n x n node grid
/// (h = 1/(n-1)). `boundary(s1, s2)` is evaluated on edge nodes and
/// `source(s1, s2)` on interior nodes. Returns the full grid row-major.
Eigen::MatrixXd poisson_fd(int n,
                           const std::function<double(double, double)>& boundary,
                           const std::function<double(double, double)>& source);

/// Backward-Euler heat solve of an arbitrary interior initial field
/// (n x n interior nodes, h = 1/(n+1), zero boundary).
Eigen::MatrixXd heat_backward_euler(const Eigen::MatrixXd& u0, double alpha,
                                    double t_end, int steps);

}  // namespace detail

/// Solves the task's PDE at `level` (0-based).
Eigen::VectorXd simulate(const TaskSpec& task, const ScenarioInput& x,
                         int level);

struct QueryResult {
  Eigen::VectorXd output;
  double cost = 0.0;
};

QueryResult query(const TaskSpec& task, const ScenarioInput& x, int level);

/// Samples of one fidelity level. Rows of `inputs` hold physical scenario
/// parameters; `scenario_ids` identify scenarios across levels.
struct LevelSamples {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd outputs;
  std::vector<std::int64_t> scenario_ids;

  Eigen::Index size() const { return inputs.rows(); }
  void append(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
              std::int64_t id);
};

struct MultiFidelityDataset {
  TaskSpec task;
  std::vector<LevelSamples> levels;
  std::vector<std::int64_t> reference_ids;  // present at every level
  std::uint64_t seed = 0;
  std::int64_t next_scenario_id = 0;

  /// Throws ContractError on shape violations or a reference scenario that
  /// is missing (or has different inputs) at some level.
  void validate() const;
  std::int64_t total_points() const;
};

/// Uniform scenario for `scenario_id`, drawn from substream (seed, id).
Eigen::VectorXd sample_scenario(const TaskSpec& task, std::uint64_t seed,
                                std::int64_t scenario_id);

/// Uniform random dataset; scenarios [0, n_reference) are shared by every
/// level, the remaining scenarios are fresh (disjoint) per level.
MultiFidelityDataset generate_dataset(const TaskSpec& task,
                                      const std::vector<int>& n_per_level,
                                      int n_reference, std::uint64_t seed);

/// Inputs mapped to [0, 1]^d_x by the task's physical ranges.
Eigen::MatrixXd normalize_inputs(const TaskSpec& task,
                                 const Eigen::MatrixXd& inputs);

}  // namespace mfdal
