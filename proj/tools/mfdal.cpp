#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfdal/baselines.hpp"
#include "mfdal/checkpoint.hpp"
#include "mfdal/errors.hpp"
#include "mfdal/harness.hpp"
#include "mfdal/io.hpp"
#include "mfdal/metrics.hpp"
#include "mfdal/plot.hpp"
#include "mfdal/runtime.hpp"

using namespace mfdal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
  if (g.seed_set) c.seeds = {g.seed};
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

int report(const ExperimentSummary& s, const fs::path& out) {
  for (const auto& cell : s.cells) {
    std::cout << cell.name << ":";
    for (double v : cell.final_nrmse) std::cout << ' ' << format_double(v);
    std::cout << (cell.ok() ? "" : "  (failed)") << '\n';
    for (const auto& [seed, msg] : cell.errors)
      std::cerr << "  seed " << seed << ": " << msg << '\n';
  }
  std::cout << "summary: " << (out / "summary.json").string() << '\n';
  return s.ok() ? 0 : 1;
}

void cmd_gen_data(const Globals& g, const std::string& task, int levels,
                  std::vector<int> sizes, int n_reference, const std::string& setting) {
  const TaskSpec spec = TaskSpec::make(task_name_from_string(task), levels);
  if (sizes.empty()) sizes.assign(levels, 64);
  const auto data = build_passive_setting(spec, passive_setting_from_string(setting), sizes,
                                          n_reference, g.seed);
  const fs::path out = g.out.empty() ? fs::path("data") : fs::path(g.out);
  write_dataset(out, data);
  std::cout << "wrote " << out.string() << " (";
  for (int k = 0; k < levels; ++k)
    std::cout << (k ? ", " : "") << data.levels[k].size() << " at level " << k + 1;
  std::cout << ")\n";
}

void cmd_train(const Globals& g, const std::string& data_dir, const std::string& method,
               int epochs) {
  const auto data = read_dataset(data_dir);
  SurrogateConfig mc = g.config.empty() ? SurrogateConfig{} : load_experiment_config(g.config).model;
  mc.seed = g.seed;
  const fs::path out = g.out.empty() ? fs::path("checkpoint") : fs::path(g.out);
  const std::string task = to_string(data.task.name);
  const int K = data.task.num_levels();
  const ModelType type = model_type_from_string(method == "dmfdal" ? "dmfnp" : method);
  if (type == ModelType::dmfnp) {
    auto model = SurrogateModel::for_task(data.task, mc);
    const auto r = train(model, data, epochs);
    save_checkpoint(model, out, {type, task, K, -1, -1});
    if (!r.losses.empty()) std::cout << "final loss " << format_double(r.losses.back()) << '\n';
  } else if (type == ModelType::sfnp) {
    const auto model = train_sfnp(data, mc, epochs);
    save_checkpoint(model, out, {type, task, K, -1, K - 1});
  } else {
    const auto paired = pair_nested(data);
    const auto model = train_mfnp(paired, data.task, mc, epochs);
    save_checkpoint(model.net, out, {type, task, K, model.low_level, model.high_level});
  }
  std::cout << "wrote " << out.string() << '\n';
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data_dir,
             int test_size) {
  const auto loaded = load_checkpoint(checkpoint);
  const auto data = read_dataset(data_dir);
  const TaskSpec& task = data.task;
  if (!loaded.info.task.empty() && loaded.info.task != to_string(task.name))
    throw DomainError("checkpoint was trained on '" + loaded.info.task +
                      "' but the data set is '" + to_string(task.name) + "'");
  const TestSet test = make_test_set(task, test_size, g.seed);
  const int K = task.num_levels();
  json result = {{"checkpoint", checkpoint},
                 {"model_type", to_string(loaded.info.type)},
                 {"test_size", test_size}};
  json levels = json::array();
  Eigen::MatrixXd top;
  switch (loaded.info.type) {
    case ModelType::dmfnp: {
      const PosteriorState state(loaded.model, encode_all(loaded.model, data.levels));
      for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXd mean = predict(loaded.model, state, k, test.inputs).mean;
        levels.push_back(nrmse(mean, test.outputs[k]));
        if (k == K - 1) top = mean;
      }
      break;
    }
    case ModelType::sfnp:
      top = predict_sfnp(loaded.model, data, test.inputs).mean;
      break;
    case ModelType::mfnp: {
      const MfnpModel model{loaded.model, task, loaded.info.low_level, loaded.info.high_level};
      top = predict_mfnp(model, pair_nested(data), test.inputs).prediction.mean;
      break;
    }
  }
  if (levels.empty()) {
    for (int k = 0; k + 1 < K; ++k) levels.push_back(nullptr);
    levels.push_back(nrmse(top, test.outputs[K - 1]));
  }
  result["nrmse"] = levels;
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_csv_matrix(fs::path(g.out) / "residuals.csv", top - test.outputs[K - 1]);
    std::ofstream(fs::path(g.out) / "eval.json") << result.dump(2) << '\n';
  }
  std::cout << result.dump(2) << '\n';
  return 0;
}

void cmd_plot(const Globals& g, const std::vector<std::string>& inputs, bool linear) {
  std::vector<CurveSource> sources;
  for (const auto& s : inputs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      sources.push_back({fs::path(s).parent_path().parent_path().filename().string(), s});
    else
      sources.push_back({s.substr(0, eq), s.substr(eq + 1)});
  }
  const fs::path out = g.out.empty() ? fs::path("curves.svg") : fs::path(g.out);
  plot_curves(sources, out, !linear);
  std::cout << "wrote " << out.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Multi-fidelity neural-process surrogates and active learning on PDE tasks"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed (overrides the config's seeds)");
  app.add_option("--out", g.out, "Output path");

  auto* run = app.add_subcommand("run", "Run the experiment described by --config");

  auto* active = app.add_subcommand("active", "Run an active-learning experiment");
  std::vector<std::string> acquisitions;
  active->add_option("--acquisition", acquisitions, "mf_lig, random or variance (repeatable)");
  int iterations = -1;
  active->add_option("--iterations", iterations, "Override the iteration count");

  auto* gen = app.add_subcommand("gen-data", "Simulate a multi-fidelity data set");
  std::string task = "heat", setting = "non-nested";
  int levels = 2, n_reference = 8;
  std::vector<int> sizes;
  gen->add_option("--task", task, "heat or poisson");
  gen->add_option("--levels", levels, "Number of fidelity levels");
  gen->add_option("--sizes", sizes, "Scenarios per level (default 64 each)");
  gen->add_option("--n-reference", n_reference, "Reference scenarios shared by all levels");
  gen->add_option("--setting", setting, "full, nested or non-nested");

  auto* tr = app.add_subcommand("train", "Train a model on a data set directory");
  std::string data_dir, method = "dmfnp";
  int epochs = -1;
  tr->add_option("--data", data_dir, "Data set directory")->required();
  tr->add_option("--model", method, "dmfnp, sfnp or mfnp");
  tr->add_option("--epochs", epochs, "Override the configured epoch count");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a fresh test set");
  std::string checkpoint;
  int test_size = 512;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ev->add_option("--data", data_dir, "Context data set directory")->required();
  ev->add_option("--test-size", test_size, "Test scenarios");

  auto* pl = app.add_subcommand("plot", "Plot nRMSE against cumulative cost");
  std::vector<std::string> inputs;
  bool linear = false;
  pl->add_option("inputs", inputs, "metrics.csv files, optionally label=path")->required();
  pl->add_flag("--linear", linear, "Linear instead of log y axis");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (run->parsed()) {
      if (g.config.empty()) throw DomainError("run needs --config");
      const auto c = base_config(g);
      return report(run_experiment(c), c.output_dir);
    }
    if (active->parsed()) {
      auto c = base_config(g);
      c.mode = "active";
      c.methods = {"dmfdal"};
      if (!acquisitions.empty()) c.acquisitions = acquisitions;
      if (iterations >= 0) c.active.iterations = iterations;
      return report(run_experiment(c), c.output_dir);
    }
    if (gen->parsed()) cmd_gen_data(g, task, levels, sizes, n_reference, setting);
    if (tr->parsed()) cmd_train(g, data_dir, method, epochs);
    if (ev->parsed()) return cmd_eval(g, checkpoint, data_dir, test_size);
    if (pl->parsed()) cmd_plot(g, inputs, linear);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
