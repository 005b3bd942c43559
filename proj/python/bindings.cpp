#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "mfdal/acquisition.hpp"
#include "mfdal/active.hpp"
#include "mfdal/baselines.hpp"
#include "mfdal/checkpoint.hpp"
#include "mfdal/errors.hpp"
#include "mfdal/gaussian.hpp"
#include "mfdal/harness.hpp"
#include "mfdal/io.hpp"
#include "mfdal/metrics.hpp"
#include "mfdal/plot.hpp"
#include "mfdal/runtime.hpp"

namespace py = pybind11;
using namespace mfdal;

namespace {

nlohmann::json from_python(const py::handle& obj) {
  auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict record_dict(const IterationRecord& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["cumulative_cost"] = r.cumulative_cost;
  d["nrmse"] = r.nrmse;
  d["n_queried"] = r.n_queried;
  d["seconds"] = r.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-fidelity neural-process surrogates with Bayesian context aggregation";
  tune_allocator();

  auto base = py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<IncompatibleCheckpoint>(m, "IncompatibleCheckpoint",
                                                 PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  (void)base;

  // Gaussians
  py::class_<DiagGaussian>(m, "DiagGaussian")
      .def(py::init<Eigen::VectorXd, Eigen::VectorXd>(), py::arg("mean"), py::arg("var"))
      .def_static("standard", &DiagGaussian::standard, py::arg("dim"))
      .def_property_readonly("mean", &DiagGaussian::mean)
      .def_property_readonly("var", &DiagGaussian::var)
      .def_property_readonly("dim", &DiagGaussian::dim)
      .def("__repr__", [](const DiagGaussian& g) {
        return "DiagGaussian(dim=" + std::to_string(g.dim()) + ")";
      });
  m.def("kl", &kl, py::arg("p"), py::arg("q"));
  m.def("symmetrized_divergence", &symmetrized_divergence, py::arg("p"), py::arg("q"));
  m.def("log_density", &log_density, py::arg("g"), py::arg("v"));
  m.def(
      "fuse",
      [](const DiagGaussian& prior, const std::vector<DiagGaussian>& obs) {
        NaturalParams acc = NaturalParams::from(prior);
        for (const auto& o : obs) acc += NaturalParams::from(o);
        return acc.to_gaussian();
      },
      py::arg("prior"), py::arg("observations"),
      "Precision-weighted fusion of a prior with observation Gaussians.");

  // Tasks and simulators
  py::class_<TaskSpec>(m, "TaskSpec")
      .def_static("heat", &TaskSpec::heat, py::arg("levels") = 2)
      .def_static("poisson", &TaskSpec::poisson, py::arg("levels") = 2)
      .def_property_readonly("name", [](const TaskSpec& t) { return to_string(t.name); })
      .def_readonly("levels", &TaskSpec::levels)
      .def_readwrite("costs", &TaskSpec::costs)
      .def_property_readonly("lower", [](const TaskSpec& t) { return t.lower; })
      .def_property_readonly("upper", [](const TaskSpec& t) { return t.upper; })
      .def_property_readonly("num_levels", &TaskSpec::num_levels)
      .def_property_readonly("input_dim", &TaskSpec::input_dim)
      .def("output_dim", &TaskSpec::output_dim, py::arg("level"));
  m.def(
      "simulate",
      [](const TaskSpec& task, const Eigen::VectorXd& x, int level) {
        return simulate(task, ScenarioInput(task, x), level);
      },
      py::arg("task"), py::arg("x"), py::arg("level"));

  py::class_<LevelSamples>(m, "LevelSamples")
      .def(py::init<>())
      .def_readwrite("inputs", &LevelSamples::inputs)
      .def_readwrite("outputs", &LevelSamples::outputs)
      .def_readwrite("scenario_ids", &LevelSamples::scenario_ids)
      .def("__len__", [](const LevelSamples& l) { return l.size(); });
  py::class_<MultiFidelityDataset>(m, "MultiFidelityDataset")
      .def_readonly("task", &MultiFidelityDataset::task)
      .def_readwrite("levels", &MultiFidelityDataset::levels)
      .def_readonly("reference_ids", &MultiFidelityDataset::reference_ids)
      .def_readonly("seed", &MultiFidelityDataset::seed)
      .def("validate", &MultiFidelityDataset::validate)
      .def("total_points", &MultiFidelityDataset::total_points);
  m.def("generate_dataset", &generate_dataset, py::arg("task"), py::arg("sizes"),
        py::arg("n_reference"), py::arg("seed"));
  m.def(
      "passive_dataset",
      [](const TaskSpec& task, const std::string& setting, const std::vector<int>& sizes,
         int n_reference, std::uint64_t seed) {
        return build_passive_setting(task, passive_setting_from_string(setting), sizes,
                                     n_reference, seed);
      },
      py::arg("task"), py::arg("setting"), py::arg("sizes"), py::arg("n_reference"),
      py::arg("seed"));
  m.def("write_dataset", &write_dataset, py::arg("dir"), py::arg("data"));
  m.def("read_dataset", &read_dataset, py::arg("dir"));

  // Model
  py::class_<SurrogateConfig>(m, "SurrogateConfig")
      .def(py::init<>())
      .def_readwrite("latent_dim", &SurrogateConfig::latent_dim)
      .def_readwrite("hidden_width", &SurrogateConfig::hidden_width)
      .def_readwrite("hidden_layers", &SurrogateConfig::hidden_layers)
      .def_readwrite("learning_rate", &SurrogateConfig::learning_rate)
      .def_readwrite("epochs", &SurrogateConfig::epochs)
      .def_readwrite("mc_samples", &SurrogateConfig::mc_samples)
      .def_readwrite("context_min", &SurrogateConfig::context_min)
      .def_readwrite("context_max", &SurrogateConfig::context_max)
      .def_readwrite("reg_weight", &SurrogateConfig::reg_weight)
      .def_readwrite("seed", &SurrogateConfig::seed);

  py::class_<Prediction>(m, "Prediction")
      .def_readonly("mean", &Prediction::mean)
      .def_readonly("var", &Prediction::var)
      .def_readonly("decoder_var", &Prediction::decoder_var);

  py::class_<SurrogateModel>(m, "SurrogateModel")
      .def_static("for_task", &SurrogateModel::for_task, py::arg("task"), py::arg("config"))
      .def_property_readonly("levels", &SurrogateModel::levels)
      .def_property_readonly("input_dim", &SurrogateModel::input_dim)
      .def_property_readonly("latent_dim", &SurrogateModel::latent_dim)
      .def_property_readonly("trained", &SurrogateModel::trained)
      .def_property_readonly("epochs_trained", &SurrogateModel::epochs_trained)
      .def("parameter_count", &SurrogateModel::parameter_count)
      .def("reinitialize", &SurrogateModel::reinitialize);

  m.def(
      "train",
      [](SurrogateModel& model, const MultiFidelityDataset& data, int epochs) {
        py::gil_scoped_release release;
        return train(model, data, epochs).losses;
      },
      py::arg("model"), py::arg("data"), py::arg("epochs") = -1,
      "Trains in place and returns the per-epoch losses.");
  m.def(
      "predict",
      [](const SurrogateModel& model, const MultiFidelityDataset& context, int level,
         const Eigen::MatrixXd& x, int n_samples, std::uint64_t seed) {
        return predict(model, context.levels, level, x, n_samples, seed);
      },
      py::arg("model"), py::arg("context"), py::arg("level"), py::arg("x"),
      py::arg("n_samples") = 0, py::arg("seed") = 0);
  m.def(
      "latent_posteriors",
      [](const SurrogateModel& model, const MultiFidelityDataset& context) {
        const PosteriorState state(model, encode_all(model, context.levels));
        std::vector<DiagGaussian> out;
        for (int k = 0; k < model.levels(); ++k) out.push_back(state.posterior(k));
        return out;
      },
      py::arg("model"), py::arg("context"));
  m.def(
      "save_checkpoint",
      [](const SurrogateModel& model, const std::filesystem::path& dir) {
        save_checkpoint(model, dir);
      },
      py::arg("model"), py::arg("dir"));
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& dir) { return load_checkpoint(dir).model; },
      py::arg("dir"));

  m.def("nrmse", &nrmse, py::arg("prediction"), py::arg("truth"));

  // Acquisition
  py::class_<QueryCandidate>(m, "QueryCandidate")
      .def(py::init([](Eigen::VectorXd x, int level, double cost) {
             return QueryCandidate{std::move(x), level, cost};
           }),
           py::arg("x"), py::arg("level"), py::arg("cost"))
      .def_readonly("x", &QueryCandidate::x)
      .def_readonly("level", &QueryCandidate::level)
      .def_readonly("cost", &QueryCandidate::cost);
  m.def(
      "mf_lig_score",
      [](const SurrogateModel& model, const MultiFidelityDataset& context,
         const QueryCandidate& c, int n_y, std::uint64_t seed) {
        const PosteriorState state(model, encode_all(model, context.levels));
        return mf_lig_score(model, state, c, n_y, seed);
      },
      py::arg("model"), py::arg("context"), py::arg("candidate"), py::arg("n_y") = 8,
      py::arg("seed") = 0);
  m.def(
      "greedy_batch",
      [](const SurrogateModel& model, const MultiFidelityDataset& context,
         const std::vector<QueryCandidate>& pool, double budget,
         const std::string& acquisition, std::uint64_t seed, int n_y) {
        const PosteriorState state(model, encode_all(model, context.levels));
        const auto batch = greedy_batch(model, state, pool, budget,
                                        make_scorer(acquisition, model, seed, n_y));
        py::list out;
        for (const auto& e : batch.entries) {
          py::dict d;
          d["pool_index"] = e.pool_index;
          d["level"] = e.candidate.level;
          d["cost"] = e.candidate.cost;
          d["score"] = e.score;
          d["x"] = e.candidate.x;
          d["pseudo_label"] = e.pseudo_label;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("context"), py::arg("pool"), py::arg("budget"),
      py::arg("acquisition") = "mf_lig", py::arg("seed") = 0, py::arg("n_y") = 8,
      "Greedy budgeted batch; returns one dict per selection in order.");

  // Experiments
  m.def(
      "run_experiment",
      [](const py::dict& config) {
        const auto cfg = ExperimentConfig::from_json(from_python(config));
        ExperimentSummary s;
        {
          py::gil_scoped_release release;
          s = run_experiment(cfg);
        }
        return to_python(s.to_json());
      },
      py::arg("config"), "Runs a JSON-style config dict; returns the summary dict.");
  m.def(
      "default_config", [] { return to_python(ExperimentConfig{}.to_json()); },
      "The experiment config with every default filled in.");
  m.def(
      "run_active",
      [](const std::string& task, int levels, const py::dict& config, std::uint64_t seed) {
        auto j = from_python(config);
        j["task"] = task;
        j["levels"] = levels;
        j["mode"] = "active";
        const auto cfg = ExperimentConfig::from_json(j);
        ActiveConfig ac = cfg.active;
        ac.acquisition = cfg.acquisitions.front();
        RunHistory h;
        {
          py::gil_scoped_release release;
          h = run_active(cfg.task_spec(), cfg.model, ac, seed);
        }
        py::list out;
        for (const auto& r : h.records) out.append(record_dict(r));
        return out;
      },
      py::arg("task"), py::arg("levels"), py::arg("config"), py::arg("seed"),
      "One active-learning run; `config` uses the experiment config layout and the "
      "first listed acquisition. Returns one record dict per iteration.");
  m.def(
      "plot_curves",
      [](const std::vector<std::pair<std::string, std::filesystem::path>>& sources,
         const std::filesystem::path& svg, bool log_y) {
        std::vector<CurveSource> s;
        for (const auto& [label, path] : sources) s.push_back({label, path});
        plot_curves(s, svg, log_y);
      },
      py::arg("sources"), py::arg("svg"), py::arg("log_y") = true);
}
