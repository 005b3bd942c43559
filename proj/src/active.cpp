#include "mfdal/active.hpp"

#include <chrono>

#include "mfdal/errors.hpp"
#include "mfdal/metrics.hpp"

namespace mfdal {
namespace {

Eigen::VectorXd uniform_in_box(const TaskSpec& task, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd x(task.input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = task.lower(i) + unit(rng) * (task.upper(i) - task.lower(i));
  return x;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

void ActiveConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("active config: " + m); };
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(budget_per_iteration >= 0.0)) fail("budget_per_iteration must be >= 0");
  if (pool_size < 1) fail("pool_size must be >= 1");
  if (retrain_epochs < 0) fail("retrain_epochs must be >= 0");
  if (n_reference < 1) fail("n_reference must be >= 1");
  if (test_size < 1) fail("test_size must be >= 1");
  if (n_y_samples < 1) fail("n_y_samples must be >= 1");
  if (acquisition != "mf_lig" && acquisition != "random" &&
      acquisition != "variance")
    fail("unknown acquisition '" + acquisition + "'");
}

TestSet make_test_set(const TaskSpec& task, int size, std::uint64_t seed) {
  if (size < 1) throw DomainError("test set size must be >= 1");
  TestSet t;
  t.inputs.resize(size, task.input_dim());
  t.outputs.resize(task.num_levels());
  for (int k = 0; k < task.num_levels(); ++k)
    t.outputs[k].resize(size, task.output_dim(k));
  for (int i = 0; i < size; ++i) {
    Rng rng = substream(seed, {stream::test_set, static_cast<std::uint64_t>(i)});
    const ScenarioInput x(task, uniform_in_box(task, rng));
    t.inputs.row(i) = x.values().transpose();
    for (int k = 0; k < task.num_levels(); ++k)
      t.outputs[k].row(i) = simulate(task, x, k).transpose();
  }
  return t;
}

std::vector<QueryCandidate> make_pool(const TaskSpec& task, int per_level,
                                      std::uint64_t seed, int iteration) {
  std::vector<QueryCandidate> pool;
  for (int k = 0; k < task.num_levels(); ++k)
    for (int i = 0; i < per_level; ++i) {
      Rng rng = substream(seed, {stream::pool, static_cast<std::uint64_t>(iteration),
                                 static_cast<std::uint64_t>(k),
                                 static_cast<std::uint64_t>(i)});
      pool.push_back({uniform_in_box(task, rng), k, task.costs[k]});
    }
  return pool;
}

std::vector<double> evaluate_levels(const SurrogateModel& model,
                                    const MultiFidelityDataset& data,
                                    const TestSet& test) {
  const PosteriorState state(model, encode_all(model, data.levels));
  std::vector<double> out;
  for (int k = 0; k < model.levels(); ++k)
    out.push_back(nrmse(predict(model, state, k, test.inputs).mean, test.outputs[k]));
  return out;
}

RunHistory run_active(const TaskSpec& task, SurrogateConfig model_config,
                      const ActiveConfig& config, std::uint64_t seed,
                      const RecordCallback& on_record) {
  task.validate();
  config.validate();
  model_config.seed = seed;
  const int K = task.num_levels();

  auto t0 = std::chrono::steady_clock::now();
  MultiFidelityDataset data = generate_dataset(
      task, std::vector<int>(K, config.n_reference), config.n_reference, seed);
  const TestSet test = make_test_set(task, config.test_size, seed);
  SurrogateModel model = SurrogateModel::for_task(task, model_config);
  train(model, data, config.initial_epochs);

  RunHistory history;
  IterationRecord rec;
  rec.iteration = 0;
  rec.n_queried.assign(K, 0);
  rec.nrmse = evaluate_levels(model, data, test);
  rec.seconds = seconds_since(t0);
  history.records.push_back(rec);
  if (on_record) on_record(rec, data, model);

  for (int it = 1; it <= config.iterations; ++it) {
    t0 = std::chrono::steady_clock::now();
    const PosteriorState state(model, encode_all(model, data.levels));
    const auto pool = make_pool(task, config.pool_size, seed, it);
    const Scorer scorer = make_scorer(
        config.acquisition, model,
        substream_seed(seed, {stream::acquisition, static_cast<std::uint64_t>(it)}),
        config.n_y_samples);
    QueryBatch batch = greedy_batch(model, state, pool, config.budget_per_iteration,
                                    scorer, {config.strict_budget});

    // Pseudo-labels only steer selection; the dataset gets true outputs.
    for (const auto& e : batch.entries) {
      const ScenarioInput x(task, e.candidate.x);
      const QueryResult r = query(task, x, e.candidate.level);
      data.levels[e.candidate.level].append(x.values(), r.output,
                                            data.next_scenario_id++);
      rec.cumulative_cost += r.cost;
      ++rec.n_queried[e.candidate.level];
    }
    history.batches.push_back(std::move(batch));

    if (config.cold_start) {
      model.reinitialize();
      train(model, data, config.initial_epochs);
    } else {
      train(model, data, config.retrain_epochs);
    }
    rec.iteration = it;
    rec.nrmse = evaluate_levels(model, data, test);
    rec.seconds = seconds_since(t0);
    history.records.push_back(rec);
    if (on_record) on_record(rec, data, model);
  }
  return history;
}

std::string to_string(PassiveSetting s) {
  switch (s) {
    case PassiveSetting::full: return "full";
    case PassiveSetting::nested: return "nested";
    case PassiveSetting::non_nested: return "non-nested";
  }
  return "full";
}

PassiveSetting passive_setting_from_string(const std::string& s) {
  if (s == "full") return PassiveSetting::full;
  if (s == "nested") return PassiveSetting::nested;
  if (s == "non-nested" || s == "non_nested") return PassiveSetting::non_nested;
  throw DomainError("unknown passive setting '" + s +
                    "' (expected full, nested or non-nested)");
}

MultiFidelityDataset build_passive_setting(const TaskSpec& task,
                                           PassiveSetting setting,
                                           const std::vector<int>& sizes,
                                           int n_reference, std::uint64_t seed) {
  task.validate();
  const int K = task.num_levels();
  if (static_cast<int>(sizes.size()) != K)
    throw DomainError("need one size per fidelity level");
  for (int n : sizes)
    if (n < 1) throw DomainError("every level needs at least one scenario");
  if (n_reference < 0) throw DomainError("n_reference must be >= 0");

  if (setting == PassiveSetting::non_nested)
    return generate_dataset(task, sizes, n_reference, seed);

  for (int k = 1; k < K; ++k) {
    if (setting == PassiveSetting::full && sizes[k] != sizes[0])
      throw DomainError("full setting needs equal sizes at every level");
    if (setting == PassiveSetting::nested && sizes[k] > sizes[k - 1])
      throw DomainError("nested setting needs non-increasing sizes");
  }
  if (n_reference > sizes.back())
    throw DomainError("n_reference exceeds the highest-level size");

  MultiFidelityDataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.levels.resize(K);
  for (int i = 0; i < n_reference; ++i) ds.reference_ids.push_back(i);
  std::vector<ScenarioInput> inputs;
  for (int i = 0; i < sizes[0]; ++i)
    inputs.emplace_back(task, sample_scenario(task, seed, i));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < sizes[k]; ++i)
      ds.levels[k].append(inputs[i].values(), simulate(task, inputs[i], k), i);
  ds.next_scenario_id = sizes[0];
  return ds;
}

}  // namespace mfdal
