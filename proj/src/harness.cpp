#include "mfdal/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "mfdal/baselines.hpp"
#include "mfdal/errors.hpp"
#include "mfdal/io.hpp"
#include "mfdal/metrics.hpp"

namespace mfdal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }))
      throw ParseError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + ": wrong type (" +
                     std::string(j.at(key).type_name()) + ")");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double data_cost(const MultiFidelityDataset& d) {
  double c = 0.0;
  for (int k = 0; k < d.task.num_levels(); ++k)
    c += d.task.costs[k] * static_cast<double>(d.levels[k].size());
  return c;
}

class SeedWriter {
 public:
  SeedWriter(const fs::path& dir, int levels, bool record_wall_time)
      : dir_(dir), record_wall_time_(record_wall_time) {
    fs::create_directories(dir);
    metrics_.open(dir / "metrics.csv", std::ios::trunc);
    timing_.open(dir / "timing.csv", std::ios::trunc);
    if (!metrics_ || !timing_)
      throw std::runtime_error("cannot write under " + dir.string());
    metrics_ << metrics_header(levels) << '\n';
    timing_ << "iteration,seconds\n";
  }

  void record(IterationRecord r) {
    timing_ << r.iteration << ',' << format_double(r.seconds) << '\n';
    if (!record_wall_time_) r.seconds = 0.0;
    metrics_ << metrics_row(r) << '\n';
    metrics_.flush();
    timing_.flush();
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  bool record_wall_time_;
  std::ofstream metrics_, timing_;
};

struct SeedOutcome {
  double final_nrmse = kNaN;
};

SeedOutcome run_passive_seed(const ExperimentConfig& cfg, const std::string& method,
                             std::uint64_t seed, SeedWriter& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const TaskSpec task = cfg.task_spec();
  const int K = task.num_levels();
  const std::vector<int> sizes =
      cfg.passive.sizes.empty() ? std::vector<int>(K, 64) : cfg.passive.sizes;
  const auto data = build_passive_setting(task, cfg.passive.setting, sizes,
                                          cfg.passive.n_reference, seed);
  const TestSet test = make_test_set(task, cfg.passive.test_size, seed);
  SurrogateConfig mc = cfg.model;
  mc.seed = seed;

  IterationRecord rec;
  rec.iteration = 0;
  rec.cumulative_cost = data_cost(data);
  for (const auto& lv : data.levels) rec.n_queried.push_back(static_cast<int>(lv.size()));
  rec.nrmse.assign(K, kNaN);
  Eigen::MatrixXd top;
  json extra = json::object();

  if (method == "dmfdal") {
    auto model = SurrogateModel::for_task(task, mc);
    train(model, data);
    const PosteriorState state(model, encode_all(model, data.levels));
    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd mean = predict(model, state, k, test.inputs).mean;
      rec.nrmse[k] = nrmse(mean, test.outputs[k]);
      if (k == K - 1) top = mean;
    }
  } else if (method == "sfnp") {
    const auto model = train_sfnp(data, mc);
    top = predict_sfnp(model, data, test.inputs).mean;
  } else {
    const auto paired = pair_nested(data);
    const auto model = train_mfnp(paired, task, mc);
    const auto sim = predict_mfnp(model, paired, test.inputs);
    top = sim.prediction.mean;
    extra["paired_scenarios"] = paired.size();
    extra["low_fidelity_evaluation_cost"] = sim.low_fidelity_cost;
  }
  rec.nrmse[K - 1] = nrmse(top, test.outputs[K - 1]);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.record(rec);
  if (cfg.write_residuals) write_csv_matrix(out.dir() / "residuals.csv", top - test.outputs[K - 1]);
  if (!extra.empty()) std::ofstream(out.dir() / "extra.json") << extra.dump(2) << '\n';
  return {rec.nrmse[K - 1]};
}

SeedOutcome run_active_seed(const ExperimentConfig& cfg, const std::string& acquisition,
                            std::uint64_t seed, SeedWriter& out) {
  const TaskSpec task = cfg.task_spec();
  ActiveConfig ac = cfg.active;
  ac.acquisition = acquisition;
  const int total = ac.iterations;
  std::optional<TestSet> test;
  const auto history = run_active(
      task, cfg.model, ac, seed,
      [&](const IterationRecord& r, const MultiFidelityDataset& data,
          const SurrogateModel& model) {
        out.record(r);
        if (r.iteration == total && cfg.write_residuals) {
          if (!test) test = make_test_set(task, ac.test_size, seed);
          const int top = model.top_level();
          const PosteriorState state(model, encode_all(model, data.levels));
          write_csv_matrix(out.dir() / "residuals.csv",
                           predict(model, state, top, test->inputs).mean -
                               test->outputs[top]);
        }
      });
  return {history.records.back().nrmse.back()};
}

void write_summary(const fs::path& dir, const ExperimentConfig& cfg,
                   const ExperimentSummary& s) {
  json j = s.to_json();
  j["config"] = cfg.to_json();
  std::ofstream(dir / "summary.json", std::ios::trunc) << j.dump(2) << '\n';
}

}  // namespace

TaskSpec ExperimentConfig::task_spec() const {
  TaskSpec t = TaskSpec::make(task_name_from_string(task), levels);
  if (!costs.empty()) {
    if (static_cast<int>(costs.size()) != levels)
      throw DomainError("costs needs one entry per level");
    t.costs = costs;
  }
  t.validate();
  return t;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("config: " + m); };
  const TaskSpec t = task_spec();
  model.validate();
  if (seeds.empty()) fail("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    fail("seeds must be distinct");
  if (output_dir.empty()) fail("output_dir must not be empty");
  if (mode != "passive" && mode != "active")
    fail("mode must be passive or active, got '" + mode + "'");
  if (methods.empty()) fail("methods must not be empty");
  for (const auto& m : methods)
    if (m != "dmfdal" && m != "sfnp" && m != "mfnp")
      fail("unknown method '" + m + "' (expected dmfdal, sfnp or mfnp)");
  if (std::set<std::string>(methods.begin(), methods.end()).size() != methods.size())
    fail("methods must be distinct");

  if (mode == "active") {
    if (methods != std::vector<std::string>{"dmfdal"})
      fail("active mode supports only the dmfdal method");
    if (acquisitions.empty()) fail("active.acquisitions must not be empty");
    for (const auto& a : acquisitions) {
      ActiveConfig probe = active;
      probe.acquisition = a;
      probe.validate();
    }
    if (std::set<std::string>(acquisitions.begin(), acquisitions.end()).size() !=
        acquisitions.size())
      fail("active.acquisitions must be distinct");
    return;
  }

  const int K = t.num_levels();
  const std::vector<int> sizes = passive.sizes.empty() ? std::vector<int>(K, 64) : passive.sizes;
  if (static_cast<int>(sizes.size()) != K) fail("passive.sizes needs one entry per level");
  for (int n : sizes)
    if (n < 1) fail("passive.sizes must be positive");
  if (passive.n_reference < 0) fail("passive.n_reference must be >= 0");
  if (passive.test_size < 1) fail("passive.test_size must be >= 1");
  for (int k = 1; k < K; ++k) {
    if (passive.setting == PassiveSetting::full && sizes[k] != sizes[0])
      fail("full setting needs equal passive.sizes");
    if (passive.setting == PassiveSetting::nested && sizes[k] > sizes[k - 1])
      fail("nested setting needs non-increasing passive.sizes");
  }
  if (passive.n_reference > *std::min_element(sizes.begin(), sizes.end()))
    fail("passive.n_reference exceeds a level size");
  const bool need_refs = std::find(methods.begin(), methods.end(), "dmfdal") != methods.end() &&
                         K > 1 && model.reg_weight > 0.0;
  if (need_refs && passive.n_reference == 0)
    fail("dmfdal with reg_weight > 0 needs passive.n_reference >= 1");
  if (std::find(methods.begin(), methods.end(), "mfnp") != methods.end() &&
      passive.setting == PassiveSetting::non_nested && passive.n_reference == 0)
    fail("mfnp needs pairable data: a non-nested setting without reference "
         "scenarios has no scenario at both the lowest and highest level");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j,
             {"task", "levels", "costs", "mode", "methods", "seeds", "output_dir",
              "record_wall_time", "write_residuals", "passive", "active", "model"},
             "config");
  read(j, "task", c.task, "config");
  read(j, "levels", c.levels, "config");
  read(j, "costs", c.costs, "config");
  read(j, "mode", c.mode, "config");
  read(j, "methods", c.methods, "config");
  read(j, "seeds", c.seeds, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "record_wall_time", c.record_wall_time, "config");
  read(j, "write_residuals", c.write_residuals, "config");
  if (j.contains("passive")) {
    const auto& p = j.at("passive");
    check_keys(p, {"setting", "sizes", "n_reference", "test_size"}, "config.passive");
    std::string setting = to_string(c.passive.setting);
    read(p, "setting", setting, "config.passive");
    c.passive.setting = passive_setting_from_string(setting);
    read(p, "sizes", c.passive.sizes, "config.passive");
    read(p, "n_reference", c.passive.n_reference, "config.passive");
    read(p, "test_size", c.passive.test_size, "config.passive");
  }
  if (j.contains("active")) {
    const auto& a = j.at("active");
    check_keys(a,
               {"iterations", "budget_per_iteration", "pool_size", "acquisitions",
                "initial_epochs", "retrain_epochs", "cold_start", "n_reference",
                "test_size", "n_y_samples", "strict_budget"},
               "config.active");
    read(a, "iterations", c.active.iterations, "config.active");
    read(a, "budget_per_iteration", c.active.budget_per_iteration, "config.active");
    read(a, "pool_size", c.active.pool_size, "config.active");
    read(a, "acquisitions", c.acquisitions, "config.active");
    read(a, "initial_epochs", c.active.initial_epochs, "config.active");
    read(a, "retrain_epochs", c.active.retrain_epochs, "config.active");
    read(a, "cold_start", c.active.cold_start, "config.active");
    read(a, "n_reference", c.active.n_reference, "config.active");
    read(a, "test_size", c.active.test_size, "config.active");
    read(a, "n_y_samples", c.active.n_y_samples, "config.active");
    read(a, "strict_budget", c.active.strict_budget, "config.active");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m,
               {"latent_dim", "hidden_width", "hidden_layers", "learning_rate", "epochs",
                "mc_samples", "context_min", "context_max", "reg_weight"},
               "config.model");
    read(m, "latent_dim", c.model.latent_dim, "config.model");
    read(m, "hidden_width", c.model.hidden_width, "config.model");
    read(m, "hidden_layers", c.model.hidden_layers, "config.model");
    read(m, "learning_rate", c.model.learning_rate, "config.model");
    read(m, "epochs", c.model.epochs, "config.model");
    read(m, "mc_samples", c.model.mc_samples, "config.model");
    read(m, "context_min", c.model.context_min, "config.model");
    read(m, "context_max", c.model.context_max, "config.model");
    read(m, "reg_weight", c.model.reg_weight, "config.model");
  }
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  return {
      {"task", task},
      {"levels", levels},
      {"costs", task_spec().costs},
      {"mode", mode},
      {"methods", methods},
      {"seeds", seeds},
      {"output_dir", output_dir},
      {"record_wall_time", record_wall_time},
      {"write_residuals", write_residuals},
      {"passive",
       {{"setting", to_string(passive.setting)},
        {"sizes", passive.sizes.empty() ? std::vector<int>(levels, 64) : passive.sizes},
        {"n_reference", passive.n_reference},
        {"test_size", passive.test_size}}},
      {"active",
       {{"iterations", active.iterations},
        {"budget_per_iteration", active.budget_per_iteration},
        {"pool_size", active.pool_size},
        {"acquisitions", acquisitions},
        {"initial_epochs", active.initial_epochs},
        {"retrain_epochs", active.retrain_epochs},
        {"cold_start", active.cold_start},
        {"n_reference", active.n_reference},
        {"test_size", active.test_size},
        {"n_y_samples", active.n_y_samples},
        {"strict_budget", active.strict_budget}}},
      {"model",
       {{"latent_dim", model.latent_dim},
        {"hidden_width", model.hidden_width},
        {"hidden_layers", model.hidden_layers},
        {"learning_rate", model.learning_rate},
        {"epochs", model.epochs},
        {"mc_samples", model.mc_samples},
        {"context_min", model.context_min},
        {"context_max", model.context_max},
        {"reg_weight", model.reg_weight}}},
  };
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

bool ExperimentSummary::ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.ok(); });
}

json ExperimentSummary::to_json() const {
  json cells_json = json::array();
  for (const auto& c : cells) {
    std::vector<double> good;
    json finals = json::array();
    for (double v : c.final_nrmse) {
      finals.push_back(number_or_null(v));
      if (std::isfinite(v)) good.push_back(v);
    }
    json errors = json::array();
    for (const auto& [seed, msg] : c.errors) errors.push_back({{"seed", seed}, {"message", msg}});
    cells_json.push_back({
        {"name", c.name},
        {"method", c.method},
        {"acquisition", c.acquisition.empty() ? json(nullptr) : json(c.acquisition)},
        {"seeds", c.seeds},
        {"final_nrmse", finals},
        {"median", good.empty() ? json(nullptr) : json(median(good))},
        {"min", good.empty() ? json(nullptr) : json(*std::min_element(good.begin(), good.end()))},
        {"max", good.empty() ? json(nullptr) : json(*std::max_element(good.begin(), good.end()))},
        {"status", c.ok() ? "ok" : "failed"},
        {"errors", errors},
    });
  }
  return {{"status", ok() ? "ok" : "failed"},
          {"metric", "nrmse = ||pred - truth||_F / ||truth||_F at the highest level, "
                     "final row of each seed's metrics.csv"},
          {"cells", cells_json}};
}

std::string metrics_header(int levels) {
  std::string h = "iteration,cumulative_cost";
  for (int k = 1; k <= levels; ++k) h += ",nrmse_level_" + std::to_string(k);
  for (int k = 1; k <= levels; ++k) h += ",n_queried_level_" + std::to_string(k);
  return h + ",seconds";
}

std::string metrics_row(const IterationRecord& r) {
  std::string row = std::to_string(r.iteration) + "," + format_double(r.cumulative_cost);
  for (double v : r.nrmse) row += "," + format_double(v);
  for (int n : r.n_queried) row += "," + std::to_string(n);
  return row + "," + format_double(r.seconds);
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path root = config.output_dir;
  fs::create_directories(root);
  const int K = config.task_spec().num_levels();

  ExperimentSummary summary;
  const bool active = config.mode == "active";
  const auto& names = active ? config.acquisitions : config.methods;
  for (const auto& name : names) {
    CellResult cell;
    cell.method = active ? "dmfdal" : name;
    cell.acquisition = active ? name : "";
    cell.name = active ? "dmfdal-" + name : name;
    for (auto seed : config.seeds) {
      cell.seeds.push_back(seed);
      const fs::path dir = root / cell.name / ("seed_" + std::to_string(seed));
      try {
        SeedWriter out(dir, K, config.record_wall_time);
        const SeedOutcome r = active ? run_active_seed(config, name, seed, out)
                                     : run_passive_seed(config, name, seed, out);
        cell.final_nrmse.push_back(r.final_nrmse);
      } catch (const std::exception& e) {
        cell.final_nrmse.push_back(kNaN);
        cell.errors.emplace_back(seed, e.what());
      }
    }
    summary.cells.push_back(std::move(cell));
    write_summary(root, config, summary);
  }
  return summary;
}

}  // namespace mfdal
