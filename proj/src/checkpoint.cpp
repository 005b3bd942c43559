#include "mfdal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kFormat = "mfdal-checkpoint";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
    return r;
  }
  return v;
}

void append(std::vector<double>& out, const Eigen::RowVectorXd& v) {
  out.insert(out.end(), v.data(), v.data() + v.size());
}
void append(std::vector<double>& out, const Eigen::VectorXd& v) {
  out.insert(out.end(), v.data(), v.data() + v.size());
}

json config_to_json(const SurrogateConfig& c) {
  return {{"latent_dim", c.latent_dim},       {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers}, {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},               {"mc_samples", c.mc_samples},
          {"context_min", c.context_min},     {"context_max", c.context_max},
          {"reg_weight", c.reg_weight},       {"seed", c.seed}};
}

SurrogateConfig config_from_json(const json& j) {
  SurrogateConfig c;
  c.latent_dim = j.at("latent_dim").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.mc_samples = j.at("mc_samples").get<int>();
  c.context_min = j.at("context_min").get<double>();
  c.context_max = j.at("context_max").get<double>();
  c.reg_weight = j.at("reg_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Values stored after the network parameters, in order.
std::size_t state_value_count(int input_dim, const std::vector<int>& dims,
                              int latent_dim) {
  std::size_t n = 2 * static_cast<std::size_t>(input_dim);
  for (int d : dims) n += static_cast<std::size_t>(d) + 1 + 2 * latent_dim;
  return n;
}

void mismatch(const std::string& what, long long stored, long long expected) {
  throw IncompatibleCheckpoint("checkpoint " + what + " is " +
                               std::to_string(stored) + " but the model expects " +
                               std::to_string(expected));
}

}  // namespace

std::string to_string(ModelType t) {
  switch (t) {
    case ModelType::dmfnp: return "dmfnp";
    case ModelType::sfnp: return "sfnp";
    case ModelType::mfnp: return "mfnp";
  }
  return "dmfnp";
}

ModelType model_type_from_string(const std::string& s) {
  if (s == "dmfnp") return ModelType::dmfnp;
  if (s == "sfnp") return ModelType::sfnp;
  if (s == "mfnp") return ModelType::mfnp;
  throw ParseError("unknown model type '" + s + "'");
}

void save_checkpoint(const SurrogateModel& model, const fs::path& dir,
                     const CheckpointInfo& info) {
  fs::create_directories(dir);
  std::vector<double> values = model.parameters();
  const std::size_t n_params = values.size();
  append(values, model.feature_scaling().offset);
  append(values, model.feature_scaling().scale);
  for (const auto& os : model.output_scaling()) {
    append(values, os.mean);
    values.push_back(os.scale);
  }
  for (const auto& p : model.priors()) {
    append(values, p.mean());
    append(values, p.var());
  }

  json manifest = {
      {"format", kFormat},
      {"version", kCheckpointVersion},
      {"model_type", to_string(info.type)},
      {"task", info.task},
      {"task_levels", info.task_levels},
      {"low_level", info.low_level},
      {"high_level", info.high_level},
      {"input_dim", model.input_dim()},
      {"output_dims", model.output_dims()},
      {"config", config_to_json(model.config())},
      {"trained", model.trained()},
      {"epochs_trained", model.epochs_trained()},
      {"parameter_count", n_params},
      {"value_count", values.size()},
      {"byte_order", "little"},
  };

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  for (double v : values) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  bin.close();
  if (!bin) throw std::runtime_error("failed to write " + (dir / "params.bin").string());

  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  man << manifest.dump(2) << '\n';
  if (!man) throw std::runtime_error("failed to write " + (dir / "manifest.json").string());
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw ParseError("cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    j = json::parse(man);
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }

  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw ParseError("manifest.json is not an mfdal checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw IncompatibleCheckpoint("checkpoint format version " +
                                   std::to_string(version) +
                                   ", this build reads version " +
                                   std::to_string(kCheckpointVersion));
    CheckpointInfo info;
    info.type = model_type_from_string(j.at("model_type").get<std::string>());
    info.task = j.at("task").get<std::string>();
    info.task_levels = j.at("task_levels").get<int>();
    info.low_level = j.at("low_level").get<int>();
    info.high_level = j.at("high_level").get<int>();

    const int input_dim = j.at("input_dim").get<int>();
    const auto dims = j.at("output_dims").get<std::vector<int>>();
    const SurrogateConfig cfg = config_from_json(j.at("config"));
    SurrogateModel model(input_dim, dims, cfg, FeatureScaling::identity(input_dim));

    const std::size_t n_params = j.at("parameter_count").get<std::size_t>();
    if (n_params != model.parameter_count())
      throw ParseError("manifest parameter_count " + std::to_string(n_params) +
                       " disagrees with the architecture (" +
                       std::to_string(model.parameter_count()) + ")");
    const std::size_t total =
        n_params + state_value_count(input_dim, dims, cfg.latent_dim);
    if (j.at("value_count").get<std::size_t>() != total)
      throw ParseError("manifest value_count disagrees with the architecture");

    const fs::path bin_path = dir / "params.bin";
    std::error_code ec;
    const auto bytes = fs::file_size(bin_path, ec);
    if (ec) throw ParseError("cannot open " + bin_path.string());
    if (bytes != total * sizeof(double))
      throw ParseError("params.bin has " + std::to_string(bytes) +
                       " bytes, expected " +
                       std::to_string(total * sizeof(double)) +
                       (bytes < total * sizeof(double) ? " (truncated)" : ""));
    std::vector<double> values(total);
    std::ifstream bin(bin_path, std::ios::binary);
    for (double& v : values) {
      std::uint64_t bits = 0;
      bin.read(reinterpret_cast<char*>(&bits), sizeof bits);
      v = std::bit_cast<double>(to_little_endian(bits));
    }
    if (!bin) throw ParseError("params.bin: short read");

    std::size_t at = 0;
    auto take = [&](Eigen::Index n) {
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data() + at, n);
      at += n;
      return v;
    };
    model.set_parameters(std::span(values.data(), n_params));
    at = n_params;
    FeatureScaling fsc;
    fsc.offset = take(input_dim).transpose();
    fsc.scale = take(input_dim).transpose();
    model.set_feature_scaling(std::move(fsc));
    std::vector<OutputScaling> outs;
    for (int d : dims) {
      OutputScaling os;
      os.mean = take(d).transpose();
      os.scale = take(1)(0);
      outs.push_back(std::move(os));
    }
    model.set_output_scaling(std::move(outs));
    std::vector<DiagGaussian> priors;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      Eigen::VectorXd m = take(cfg.latent_dim);
      Eigen::VectorXd v = take(cfg.latent_dim);
      priors.emplace_back(std::move(m), std::move(v));
    }
    model.set_priors(std::move(priors));
    model.set_training_state(j.at("trained").get<bool>(),
                             j.at("epochs_trained").get<std::int64_t>());
    return {std::move(model), info};
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  } catch (const ContractError& e) {
    throw ParseError("checkpoint is inconsistent: " + std::string(e.what()));
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& dir,
                                 const SurrogateModel& expected) {
  auto loaded = load_checkpoint(dir);
  const auto& m = loaded.model;
  if (m.input_dim() != expected.input_dim())
    mismatch("input dimension", m.input_dim(), expected.input_dim());
  if (m.levels() != expected.levels())
    mismatch("level count", m.levels(), expected.levels());
  for (int k = 0; k < m.levels(); ++k)
    if (m.output_dim(k) != expected.output_dim(k))
      mismatch("output dimension of level " + std::to_string(k),
               m.output_dim(k), expected.output_dim(k));
  if (m.latent_dim() != expected.latent_dim())
    mismatch("latent dimension d_z", m.latent_dim(), expected.latent_dim());
  if (m.config().hidden_width != expected.config().hidden_width)
    mismatch("hidden width", m.config().hidden_width,
             expected.config().hidden_width);
  if (m.config().hidden_layers != expected.config().hidden_layers)
    mismatch("hidden layer count", m.config().hidden_layers,
             expected.config().hidden_layers);
  return loaded;
}

}  // namespace mfdal
