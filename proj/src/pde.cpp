#include "mfdal/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "mfdal/errors.hpp"
#include "mfdal/random.hpp"

namespace mfdal {
namespace {

constexpr double kPi = std::numbers::pi;

// Orthonormal discrete sine basis of size m: it diagonalizes the 1-D
// Dirichlet second-difference operator, whose eigenvalues are returned in
// `eigenvalues` (for grid spacing h = 1/(m+1)).
struct SineBasis {
  Eigen::MatrixXd vectors;
  Eigen::ArrayXd eigenvalues;

  explicit SineBasis(int m) : vectors(m, m), eigenvalues(m) {
    const double scale = std::sqrt(2.0 / (m + 1));
    const double h = 1.0 / (m + 1);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j)
        vectors(i, j) = scale * std::sin(kPi * (i + 1) * (j + 1) / (m + 1));
      const double s = std::sin(kPi * (i + 1) / (2.0 * (m + 1)));
      eigenvalues(i) = 4.0 * s * s / (h * h);
    }
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& field) const {
    return vectors * field * vectors;
  }
};

Eigen::VectorXd flatten_row_major(const Eigen::MatrixXd& grid) {
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    out.segment(r * grid.cols(), grid.cols()) = grid.row(r).transpose();
  return out;
}

void check_level(const TaskSpec& task, int level) {
  if (level < 0 || level >= task.num_levels())
    throw DomainError("unknown fidelity level " + std::to_string(level) +
                      " (task has " + std::to_string(task.num_levels()) + ")");
}

}  // namespace

std::string to_string(TaskName name) {
  return name == TaskName::heat ? "heat" : "poisson";
}

TaskName task_name_from_string(const std::string& s) {
  if (s == "heat") return TaskName::heat;
  if (s == "poisson") return TaskName::poisson;
  throw DomainError("unknown task '" + s + "' (expected heat or poisson)");
}

std::vector<double> node_count_costs(const std::vector<int>& levels) {
  std::vector<double> costs;
  for (int r : levels) {
    const double ratio = static_cast<double>(r) / levels.front();
    costs.push_back(ratio * ratio);
  }
  return costs;
}

TaskSpec TaskSpec::make(TaskName name, int n_levels) {
  if (n_levels < 1 || n_levels > 3)
    throw DomainError("tasks are defined for 1 to 3 fidelity levels");
  TaskSpec t;
  t.name = name;
  const std::vector<int> all = {16, 32, 64};
  t.levels.assign(all.begin(), all.begin() + n_levels);
  t.costs = node_count_costs(t.levels);
  if (name == TaskName::heat) {
    t.lower = Eigen::Vector3d(0.01, -1.0, -1.0);
    t.upper = Eigen::Vector3d(0.1, 1.0, 1.0);
  } else {
    t.lower = Eigen::VectorXd::Zero(5);
    t.upper = Eigen::VectorXd::Ones(5);
  }
  return t;
}

TaskSpec TaskSpec::heat(int n_levels) { return make(TaskName::heat, n_levels); }
TaskSpec TaskSpec::poisson(int n_levels) {
  return make(TaskName::poisson, n_levels);
}

int TaskSpec::output_dim(int level) const {
  check_level(*this, level);
  return levels[level] * levels[level];
}

std::vector<int> TaskSpec::output_dims() const {
  std::vector<int> dims;
  for (int r : levels) dims.push_back(r * r);
  return dims;
}

void TaskSpec::validate() const {
  if (levels.empty()) throw DomainError("task has no fidelity levels");
  if (costs.size() != levels.size())
    throw DomainError("task needs one cost per level");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k] < 3) throw DomainError("mesh resolution must be >= 3");
    if (k > 0 && levels[k] <= levels[k - 1])
      throw DomainError("mesh resolutions must be strictly increasing");
    if (k > 0 && costs[k] <= costs[k - 1])
      throw DomainError("costs must be strictly increasing");
  }
  if (costs.front() != 1.0) throw DomainError("costs[0] must equal 1");
  if (lower.size() != upper.size() || lower.size() == 0 ||
      (lower.array() >= upper.array()).any())
    throw DomainError("invalid input ranges");
  const int expected = name == TaskName::heat ? 3 : 5;
  if (input_dim() != expected)
    throw DomainError(to_string(name) + " task expects " +
                      std::to_string(expected) + " inputs");
}

ScenarioInput::ScenarioInput(const TaskSpec& task, Eigen::VectorXd x)
    : x_(std::move(x)) {
  if (x_.size() != task.input_dim())
    throw DomainError("scenario has " + std::to_string(x_.size()) +
                      " components, task expects " +
                      std::to_string(task.input_dim()));
  for (Eigen::Index i = 0; i < x_.size(); ++i) {
    if (!(x_(i) >= task.lower(i) && x_(i) <= task.upper(i))) {
      std::ostringstream msg;
      msg << "scenario component " << i << " = " << x_(i) << " outside ["
          << task.lower(i) << ", " << task.upper(i) << "]";
      throw DomainError(msg.str());
    }
  }
}

namespace detail {

Eigen::MatrixXd heat_backward_euler(const Eigen::MatrixXd& u0, double alpha,
                                    double t_end, int steps) {
  const int n = static_cast<int>(u0.rows());
  require(u0.cols() == n, "heat_backward_euler: square grid expected");
  const SineBasis basis(n);
  const double dt = t_end / steps;
  // Each implicit step (I - dt*alpha*L) u^{k+1} = u^k is diagonal in the
  // sine basis, so all `steps` solves collapse to one per-mode power.
  Eigen::MatrixXd modes = basis.transform(u0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double lambda = basis.eigenvalues(r) + basis.eigenvalues(c);
      modes(r, c) *= std::pow(1.0 + dt * alpha * lambda, -steps);
    }
  return basis.transform(modes);
}

Eigen::MatrixXd poisson_fd(int n,
                           const std::function<double(double, double)>& boundary,
                           const std::function<double(double, double)>& source) {
  require(n >= 3, "poisson_fd: need at least 3 nodes per side");
  const int m = n - 2;
  const double h = 1.0 / (n - 1);
  auto coord = [n](int i) { return static_cast<double>(i) / (n - 1); };

  Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    grid(0, i) = boundary(coord(i), 0.0);
    grid(n - 1, i) = boundary(coord(i), 1.0);
    grid(i, 0) = boundary(0.0, coord(i));
    grid(i, n - 1) = boundary(1.0, coord(i));
  }

  Eigen::MatrixXd rhs(m, m);
  const double inv_h2 = 1.0 / (h * h);
  for (int r = 1; r <= m; ++r)
    for (int c = 1; c <= m; ++c) {
      double v = source(coord(c), coord(r));
      if (r == 1) v += grid(0, c) * inv_h2;
      if (r == m) v += grid(n - 1, c) * inv_h2;
      if (c == 1) v += grid(r, 0) * inv_h2;
      if (c == m) v += grid(r, n - 1) * inv_h2;
      rhs(r - 1, c - 1) = v;
    }

  const SineBasis basis(m);
  Eigen::MatrixXd modes = basis.transform(rhs);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      modes(r, c) /= basis.eigenvalues(r) + basis.eigenvalues(c);
  grid.block(1, 1, m, m) = basis.transform(modes);
  return grid;
}

}  // namespace detail

Eigen::VectorXd solve_heat(const ScenarioInput& x, int resolution) {
  const auto& v = x.values();
  if (v.size() != 3) throw DomainError("heat scenario expects (alpha, a1, a2)");
  if (resolution < 1) throw DomainError("resolution must be positive");
  const double alpha = v(0), a1 = v(1), a2 = v(2);
  const int n = resolution;
  const double h = 1.0 / (n + 1);
  Eigen::MatrixXd u0(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double s1 = (c + 1) * h, s2 = (r + 1) * h;
      u0(r, c) = a1 * std::sin(kPi * s1) * std::sin(kPi * s2) +
                 a2 * std::sin(2.0 * kPi * s1) * std::sin(kPi * s2);
    }
  return flatten_row_major(
      detail::heat_backward_euler(u0, alpha, 1.0, 8 * resolution));
}

Eigen::VectorXd solve_poisson(const ScenarioInput& x, int resolution) {
  const auto& v = x.values();
  if (v.size() != 5)
    throw DomainError("poisson scenario expects (b1, b2, b3, b4, s)");
  if (resolution < 3) throw DomainError("resolution must be >= 3");
  const double b1 = v(0), b2 = v(1), b3 = v(2), b4 = v(3), amp = v(4);
  auto boundary = [=](double s1, double s2) {
    const bool bottom = s2 == 0.0, top = s2 == 1.0;
    const bool left = s1 == 0.0, right = s1 == 1.0;
    if (bottom && left) return 0.5 * (b1 + b4);
    if (bottom && right) return 0.5 * (b1 + b2);
    if (top && right) return 0.5 * (b3 + b2);
    if (top && left) return 0.5 * (b3 + b4);
    if (bottom) return b1;
    if (right) return b2;
    if (top) return b3;
    return b4;
  };
  auto source = [amp](double s1, double s2) {
    const double d2 = (s1 - 0.5) * (s1 - 0.5) + (s2 - 0.5) * (s2 - 0.5);
    return amp * std::exp(-25.0 * d2);
  };
  return flatten_row_major(detail::poisson_fd(resolution, boundary, source));
}

Eigen::VectorXd simulate(const TaskSpec& task, const ScenarioInput& x,
                         int level) {
  check_level(task, level);
  return task.name == TaskName::heat ? solve_heat(x, task.levels[level])
                                     : solve_poisson(x, task.levels[level]);
}

QueryResult query(const TaskSpec& task, const ScenarioInput& x, int level) {
  check_level(task, level);
  return {simulate(task, x, level), task.costs[level]};
}

void LevelSamples::append(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          std::int64_t id) {
  if (inputs.rows() > 0) {
    detail::require(x.size() == inputs.cols() && y.size() == outputs.cols(),
                    "LevelSamples::append: dimension mismatch");
  }
  inputs.conservativeResize(inputs.rows() + 1, x.size());
  outputs.conservativeResize(outputs.rows() + 1, y.size());
  inputs.row(inputs.rows() - 1) = x.transpose();
  outputs.row(outputs.rows() - 1) = y.transpose();
  scenario_ids.push_back(id);
}

void MultiFidelityDataset::validate() const {
  task.validate();
  detail::require(static_cast<int>(levels.size()) == task.num_levels(),
                  "dataset level count does not match task");
  for (int k = 0; k < task.num_levels(); ++k) {
    const auto& lv = levels[k];
    detail::require(lv.inputs.rows() == lv.outputs.rows() &&
                        lv.inputs.rows() ==
                            static_cast<Eigen::Index>(lv.scenario_ids.size()),
                    "level " + std::to_string(k) + ": row count mismatch");
    if (lv.size() > 0) {
      detail::require(lv.inputs.cols() == task.input_dim(),
                      "level " + std::to_string(k) + ": input width mismatch");
      detail::require(lv.outputs.cols() == task.output_dim(k),
                      "level " + std::to_string(k) + ": output width mismatch");
    }
  }
  for (auto id : reference_ids) {
    std::optional<Eigen::VectorXd> first;
    for (int k = 0; k < task.num_levels(); ++k) {
      const auto& ids = levels[k].scenario_ids;
      auto it = std::find(ids.begin(), ids.end(), id);
      detail::require(it != ids.end(), "reference scenario " +
                                           std::to_string(id) +
                                           " missing at level " +
                                           std::to_string(k));
      Eigen::VectorXd x = levels[k].inputs.row(it - ids.begin()).transpose();
      if (!first) first = x;
      detail::require(x == *first, "reference scenario " + std::to_string(id) +
                                       " has different inputs across levels");
    }
  }
}

std::int64_t MultiFidelityDataset::total_points() const {
  std::int64_t n = 0;
  for (const auto& lv : levels) n += lv.size();
  return n;
}

Eigen::VectorXd sample_scenario(const TaskSpec& task, std::uint64_t seed,
                                std::int64_t scenario_id) {
  Rng rng = substream(seed, {stream::scenario,
                             static_cast<std::uint64_t>(scenario_id)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd x(task.input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = task.lower(i) + unit(rng) * (task.upper(i) - task.lower(i));
  return x;
}

MultiFidelityDataset generate_dataset(const TaskSpec& task,
                                      const std::vector<int>& n_per_level,
                                      int n_reference, std::uint64_t seed) {
  task.validate();
  if (static_cast<int>(n_per_level.size()) != task.num_levels())
    throw DomainError("need one count per fidelity level");
  if (n_reference < 0) throw DomainError("n_reference must be >= 0");
  for (int n : n_per_level)
    if (n < n_reference)
      throw DomainError("n_reference exceeds a per-level count");

  MultiFidelityDataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.levels.resize(task.num_levels());
  std::vector<Eigen::VectorXd> reference_inputs;
  for (int i = 0; i < n_reference; ++i) {
    reference_inputs.push_back(sample_scenario(task, seed, i));
    ds.reference_ids.push_back(i);
  }
  std::int64_t next_id = n_reference;
  for (int k = 0; k < task.num_levels(); ++k) {
    for (int i = 0; i < n_reference; ++i) {
      ScenarioInput x(task, reference_inputs[i]);
      ds.levels[k].append(x.values(), simulate(task, x, k), i);
    }
    for (int i = n_reference; i < n_per_level[k]; ++i) {
      ScenarioInput x(task, sample_scenario(task, seed, next_id));
      ds.levels[k].append(x.values(), simulate(task, x, k), next_id);
      ++next_id;
    }
  }
  ds.next_scenario_id = next_id;
  return ds;
}

Eigen::MatrixXd normalize_inputs(const TaskSpec& task,
                                 const Eigen::MatrixXd& inputs) {
  detail::require(inputs.cols() == task.input_dim(),
                  "normalize_inputs: width mismatch");
  Eigen::RowVectorXd lo = task.lower.transpose();
  Eigen::RowVectorXd span = (task.upper - task.lower).transpose();
  return ((inputs.rowwise() - lo).array().rowwise() / span.array()).matrix();
}

}  // namespace mfdal
