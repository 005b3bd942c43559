#include "mfdal/dmfnp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::MatrixXd;

// Positive variance head: max(softplus(raw), floor).
ArrayXXd variance_head(const ArrayXXd& raw) {
  return softplus(raw).max(kVarFloor);
}

// d var / d raw for variance_head (zero where the floor is active).
ArrayXXd variance_head_slope(const ArrayXXd& raw) {
  return (softplus(raw) > kVarFloor).cast<double>() * sigmoid(raw);
}

std::vector<std::span<double>> tensor_views(std::vector<Mlp>& encoders,
                                            std::vector<Mlp>& decoders) {
  std::vector<std::span<double>> views;
  auto collect = [&](double* p, Eigen::Index n) {
    views.emplace_back(p, static_cast<std::size_t>(n));
  };
  for (auto& net : encoders) for_each_tensor(net, collect);
  for (auto& net : decoders) for_each_tensor(net, collect);
  return views;
}

// A fused posterior kept in natural form for backpropagation.
struct Fused {
  ArrayXd precision, shift, mean, var;
  Eigen::Array<bool, Eigen::Dynamic, 1> clamped;

  explicit Fused(const NaturalParams& n)
      : precision(n.precision), shift(n.shift) {
    mean = shift / precision;
    const ArrayXd raw_var = precision.inverse();
    clamped = raw_var < kVarFloor;
    var = raw_var.max(kVarFloor);
  }

  DiagGaussian gaussian() const { return {mean.matrix(), var.matrix()}; }

  // Maps d/d(mean, var) to d/d(shift, precision).
  void backward(const ArrayXd& d_mean, const ArrayXd& d_var, ArrayXd& d_shift,
                ArrayXd& d_precision) const {
    const ArrayXd p2 = precision.square();
    d_shift = d_mean / precision;
    d_precision = -d_mean * shift / p2 -
                  clamped.select(ArrayXd::Zero(var.size()), d_var / p2);
  }
};

void add_rows(NaturalParams& acc, const MatrixXd& mean, const MatrixXd& var,
              std::span<const int> rows) {
  for (int r : rows) acc.add(mean.row(r).transpose(), var.row(r).transpose());
}

// Same summation order as add_rows, so identical row sets give bit-identical
// natural parameters.
void add_all_rows(NaturalParams& acc, const MatrixXd& mean,
                  const MatrixXd& var) {
  for (Eigen::Index r = 0; r < mean.rows(); ++r)
    acc.add(mean.row(r).transpose(), var.row(r).transpose());
}

MatrixXd repeat_rows(const MatrixXd& m, int times) {
  MatrixXd out(m.rows() * times, m.cols());
  for (int t = 0; t < times; ++t) out.middleRows(t * m.rows(), m.rows()) = m;
  return out;
}

MatrixXd destandardize_mean(const OutputScaling& s, const MatrixXd& m) {
  return ((m.array() * s.scale).rowwise() + s.mean.array()).matrix();
}

class Adam {
 public:
  explicit Adam(const SurrogateModel& model, double lr)
      : m_(ModelGradient::zeros_like(model)),
        v_(ModelGradient::zeros_like(model)),
        lr_(lr) {}

  void step(SurrogateModel& model, ModelGradient& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    auto params = tensor_views(model.encoders(), model.decoders());
    auto g = tensor_views(grad.encoders, grad.decoders);
    auto m = tensor_views(m_.encoders, m_.decoders);
    auto v = tensor_views(v_.encoders, v_.decoders);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        const double gj = g[i][j];
        m[i][j] = kBeta1 * m[i][j] + (1.0 - kBeta1) * gj;
        v[i][j] = kBeta2 * v[i][j] + (1.0 - kBeta2) * gj * gj;
        params[i][j] -=
            lr_ * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  ModelGradient m_, v_;
  double lr_;
  int t_ = 0;
};

}  // namespace

// ---- Configuration ----------------------------------------------------------

void SurrogateConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError("config: " + m); };
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (hidden_width < 1) fail("hidden_width must be >= 1");
  if (hidden_layers < 0) fail("hidden_layers must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (mc_samples < 1) fail("mc_samples must be >= 1");
  if (!(context_min > 0.0 && context_min <= context_max && context_max <= 1.0))
    fail("context fraction range must satisfy 0 < min <= max <= 1");
  if (!(reg_weight >= 0.0)) fail("reg_weight must be >= 0");
}

FeatureScaling FeatureScaling::identity(int dim) {
  return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
}

FeatureScaling FeatureScaling::from_task(const TaskSpec& task) {
  return {task.lower.transpose(), (task.upper - task.lower).transpose()};
}

MatrixXd FeatureScaling::apply(const MatrixXd& x) const {
  detail::require(x.cols() == offset.size(),
                  "feature width " + std::to_string(x.cols()) +
                      " does not match model input width " +
                      std::to_string(offset.size()));
  return ((x.rowwise() - offset).array().rowwise() / scale.array()).matrix();
}

OutputScaling OutputScaling::identity(int dim) {
  return {Eigen::RowVectorXd::Zero(dim), 1.0};
}

OutputScaling OutputScaling::fit(const MatrixXd& y) {
  OutputScaling s;
  s.mean = y.colwise().mean();
  const double rms =
      std::sqrt((y.rowwise() - s.mean).array().square().mean());
  s.scale = rms > 1e-12 ? rms : 1.0;
  return s;
}

// ---- Model ------------------------------------------------------------------

ModelGradient ModelGradient::zeros_like(const SurrogateModel& model) {
  ModelGradient g;
  for (const auto& e : model.encoders()) g.encoders.push_back(e.zeros_like());
  for (const auto& d : model.decoders()) g.decoders.push_back(d.zeros_like());
  return g;
}

void ModelGradient::set_zero() {
  for (auto view : tensor_views(encoders, decoders))
    std::fill(view.begin(), view.end(), 0.0);
}

std::vector<double> ModelGradient::flatten() const {
  std::vector<double> out;
  auto collect = [&](const double* p, Eigen::Index n) {
    out.insert(out.end(), p, p + n);
  };
  for (const auto& net : encoders) for_each_tensor(net, collect);
  for (const auto& net : decoders) for_each_tensor(net, collect);
  return out;
}

SurrogateModel::SurrogateModel(int input_dim, std::vector<int> output_dims,
                               SurrogateConfig config, FeatureScaling scaling)
    : input_dim_(input_dim),
      output_dims_(std::move(output_dims)),
      config_(config),
      features_(std::move(scaling)) {
  config_.validate();
  detail::require(input_dim_ > 0, "model input_dim must be positive");
  detail::require(!output_dims_.empty(), "model needs at least one level");
  for (int d : output_dims_)
    detail::require(d > 0, "model output dims must be positive");
  detail::require(features_.offset.size() == input_dim_ &&
                      features_.scale.size() == input_dim_,
                  "feature scaling width does not match input_dim");
  for (int d : output_dims_) outputs_.push_back(OutputScaling::identity(d));
  for (int k = 0; k < levels(); ++k)
    priors_.push_back(DiagGaussian::standard(config_.latent_dim));
  reinitialize();
}

SurrogateModel SurrogateModel::for_task(const TaskSpec& task,
                                        SurrogateConfig config) {
  task.validate();
  return SurrogateModel(task.input_dim(), task.output_dims(), config,
                        FeatureScaling::from_task(task));
}

int SurrogateModel::output_dim(int level) const {
  if (level < 0 || level >= levels())
    throw DomainError("unknown fidelity level " + std::to_string(level));
  return output_dims_[level];
}

void SurrogateModel::reinitialize() {
  Rng rng = substream(config_.seed, {stream::init});
  const int dz = config_.latent_dim;
  encoders_.clear();
  decoders_.clear();
  for (int k = 0; k < levels(); ++k)
    encoders_.emplace_back(input_dim_ + output_dims_[k], config_.hidden_width,
                           config_.hidden_layers, 4 * dz, rng);
  for (int k = 0; k < levels(); ++k)
    decoders_.emplace_back(input_dim_ + dz, config_.hidden_width,
                           config_.hidden_layers, 2 * output_dims_[k], rng);
  trained_ = false;
  epochs_trained_ = 0;
}

std::size_t SurrogateModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : encoders_) n += e.parameter_count();
  for (const auto& d : decoders_) n += d.parameter_count();
  return n;
}

std::vector<double> SurrogateModel::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  auto collect = [&](const double* p, Eigen::Index n) {
    out.insert(out.end(), p, p + n);
  };
  for (const auto& net : encoders_) for_each_tensor(net, collect);
  for (const auto& net : decoders_) for_each_tensor(net, collect);
  return out;
}

void SurrogateModel::set_parameters(std::span<const double> flat) {
  detail::require(flat.size() == parameter_count(),
                  "set_parameters: expected " +
                      std::to_string(parameter_count()) + " values, got " +
                      std::to_string(flat.size()));
  std::size_t offset = 0;
  for (auto view : tensor_views(encoders_, decoders_)) {
    std::copy_n(flat.begin() + offset, view.size(), view.begin());
    offset += view.size();
  }
}

void SurrogateModel::set_output_scaling(std::vector<OutputScaling> s) {
  detail::require(static_cast<int>(s.size()) == levels(),
                  "output scaling needs one entry per level");
  for (int k = 0; k < levels(); ++k)
    detail::require(s[k].mean.size() == output_dims_[k],
                    "output scaling width mismatch");
  outputs_ = std::move(s);
}

void SurrogateModel::set_feature_scaling(FeatureScaling s) {
  detail::require(s.offset.size() == input_dim_ && s.scale.size() == input_dim_,
                  "feature scaling width mismatch");
  features_ = std::move(s);
}

void SurrogateModel::set_training_state(bool trained, std::int64_t epochs) {
  trained_ = trained;
  epochs_trained_ = epochs;
}

void SurrogateModel::set_priors(std::vector<DiagGaussian> priors) {
  detail::require(static_cast<int>(priors.size()) == levels(),
                  "need one prior per level");
  for (const auto& p : priors)
    detail::require(p.dim() == latent_dim(), "prior dimension mismatch");
  priors_ = std::move(priors);
}

// ---- Network heads ----------------------------------------------------------

EncoderBatch encode_batch(const SurrogateModel& model, int level,
                          const MatrixXd& features, const MatrixXd& y_std,
                          bool keep_tape) {
  const int dz = model.latent_dim();
  detail::require(features.rows() == y_std.rows(),
                  "encode: feature and output row counts differ");
  detail::require(y_std.cols() == model.output_dim(level),
                  "encode: output has dimension " +
                      std::to_string(y_std.cols()) + ", level " +
                      std::to_string(level) + " expects " +
                      std::to_string(model.output_dim(level)));
  MatrixXd input(features.rows(), features.cols() + y_std.cols());
  input << features, y_std;
  EncoderBatch out;
  out.raw = model.encoders()[level].forward(input,
                                            keep_tape ? &out.tape : nullptr);
  out.local_mean = out.raw.leftCols(dz);
  out.local_var = variance_head(out.raw.middleCols(dz, dz).array()).matrix();
  out.global_mean = out.raw.middleCols(2 * dz, dz);
  out.global_var = variance_head(out.raw.rightCols(dz).array()).matrix();
  return out;
}

DecoderBatch decode_batch(const SurrogateModel& model, int level,
                          const MatrixXd& features, const MatrixXd& latents,
                          bool keep_tape) {
  const int dy = model.output_dim(level);
  detail::require(latents.cols() == model.latent_dim(),
                  "decode: latent has dimension " +
                      std::to_string(latents.cols()) + ", model uses " +
                      std::to_string(model.latent_dim()));
  detail::require(features.rows() == latents.rows(),
                  "decode: feature and latent row counts differ");
  MatrixXd input(features.rows(), features.cols() + latents.cols());
  input << features, latents;
  DecoderBatch out;
  out.raw = model.decoders()[level].forward(input,
                                            keep_tape ? &out.tape : nullptr);
  out.mean = out.raw.leftCols(dy);
  out.var = variance_head(out.raw.rightCols(dy).array()).matrix();
  return out;
}

ContextEncoding encode(const SurrogateModel& model, int level,
                       const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                       std::int64_t scenario) {
  const auto& os = model.output_scaling().at(level);
  detail::require(y.size() == model.output_dim(level),
                  "encode: output has dimension " + std::to_string(y.size()) +
                      ", level " + std::to_string(level) + " expects " +
                      std::to_string(model.output_dim(level)));
  MatrixXd f = model.feature_scaling().apply(x.transpose());
  MatrixXd ys = (y.transpose() - os.mean) / os.scale;
  auto b = encode_batch(model, level, f, ys);
  return {DiagGaussian(b.local_mean.row(0).transpose(),
                       b.local_var.row(0).transpose()),
          DiagGaussian(b.global_mean.row(0).transpose(),
                       b.global_var.row(0).transpose()),
          level, scenario};
}

std::vector<ContextEncoding> encode_all(const SurrogateModel& model,
                                        std::span<const LevelSamples> levels) {
  detail::require(static_cast<int>(levels.size()) == model.levels(),
                  "encode_all: level count mismatch");
  std::vector<ContextEncoding> out;
  for (int k = 0; k < model.levels(); ++k) {
    const auto& lv = levels[k];
    if (lv.size() == 0) continue;
    const auto& os = model.output_scaling()[k];
    MatrixXd f = model.feature_scaling().apply(lv.inputs);
    MatrixXd ys = ((lv.outputs.rowwise() - os.mean) / os.scale);
    auto b = encode_batch(model, k, f, ys);
    for (Eigen::Index n = 0; n < lv.size(); ++n)
      out.push_back({DiagGaussian(b.local_mean.row(n).transpose(),
                                  b.local_var.row(n).transpose()),
                     DiagGaussian(b.global_mean.row(n).transpose(),
                                  b.global_var.row(n).transpose()),
                     k, lv.scenario_ids.empty() ? -1 : lv.scenario_ids[n]});
  }
  return out;
}

DiagGaussian decode(const SurrogateModel& model, int level,
                    const Eigen::VectorXd& z, const Eigen::VectorXd& x) {
  const auto& os = model.output_scaling().at(level);
  MatrixXd f = model.feature_scaling().apply(x.transpose());
  auto b = decode_batch(model, level, f, z.transpose());
  Eigen::VectorXd mean = destandardize_mean(os, b.mean).row(0).transpose();
  Eigen::VectorXd var = (b.var.row(0) * (os.scale * os.scale)).transpose();
  return {mean, var};
}

// ---- Aggregation ------------------------------------------------------------

PosteriorState::PosteriorState(const SurrogateModel& model)
    : priors_(model.priors()),
      local_(model.levels(), NaturalParams::zeros(model.latent_dim())),
      global_(NaturalParams::zeros(model.latent_dim())) {}

PosteriorState::PosteriorState(const SurrogateModel& model,
                               std::span<const ContextEncoding> encodings)
    : PosteriorState(model) {
  for (const auto& e : encodings) add(e);
}

void PosteriorState::add(const ContextEncoding& e) {
  detail::require(e.level >= 0 && e.level < levels(),
                  "encoding has unknown level " + std::to_string(e.level));
  const auto dz = priors_.front().dim();
  detail::require(e.local.dim() == dz && e.global.dim() == dz,
                  "encoding latent dimension " +
                      std::to_string(e.local.dim()) + " does not match " +
                      std::to_string(dz));
  local_[e.level].add(e.local.mean().array(), e.local.var().array());
  global_.add(e.global.mean().array(), e.global.var().array());
  encodings_.push_back(e);
}

NaturalParams PosteriorState::natural(int level) const {
  detail::require(level >= 0 && level < levels(), "unknown level");
  NaturalParams n = NaturalParams::from(priors_[level]);
  n += local_[level];
  n += global_;
  return n;
}

DiagGaussian PosteriorState::posterior(int level) const {
  return natural(level).to_gaussian();
}

LatentPosteriors PosteriorState::posteriors() const {
  LatentPosteriors out;
  for (int k = 0; k < levels(); ++k) out.levels.push_back(posterior(k));
  return out;
}

LatentPosteriors aggregate(const SurrogateModel& model,
                           std::span<const ContextEncoding> encodings) {
  return PosteriorState(model, encodings).posteriors();
}

DiagGaussian hypothetical_posterior(const SurrogateModel& model,
                                    std::span<const ContextEncoding> current,
                                    const ContextEncoding& candidate) {
  PosteriorState state(model, current);
  state.add(candidate);
  return state.posterior(model.top_level());
}

DiagGaussian hypothetical_posterior(const SurrogateModel& model,
                                    std::span<const ContextEncoding> current,
                                    const Eigen::VectorXd& x, int level,
                                    const Eigen::VectorXd& y) {
  return hypothetical_posterior(model, current, encode(model, level, x, y));
}

// ---- Objective --------------------------------------------------------------

TrainingData prepare_training_data(const SurrogateModel& model,
                                   std::span<const LevelSamples> levels,
                                   std::span<const std::int64_t> reference_ids) {
  detail::require(static_cast<int>(levels.size()) == model.levels(),
                  "training data has " + std::to_string(levels.size()) +
                      " levels, model has " + std::to_string(model.levels()));
  TrainingData data;
  for (int k = 0; k < model.levels(); ++k) {
    const auto& lv = levels[k];
    if (lv.size() == 0)
      throw DomainError("level " + std::to_string(k) + " has no data");
    detail::require(lv.outputs.cols() == model.output_dim(k),
                    "level " + std::to_string(k) + " output width mismatch");
    const auto& os = model.output_scaling()[k];
    data.features.push_back(model.feature_scaling().apply(lv.inputs));
    data.targets.push_back((lv.outputs.rowwise() - os.mean) / os.scale);
    std::vector<int> rows;
    for (std::size_t n = 0; n < lv.scenario_ids.size(); ++n)
      if (std::find(reference_ids.begin(), reference_ids.end(),
                    lv.scenario_ids[n]) != reference_ids.end())
        rows.push_back(static_cast<int>(n));
    data.reference_rows.push_back(std::move(rows));
  }
  return data;
}

ObjectiveDraw draw_objective(const SurrogateModel& model,
                             const TrainingData& data, Rng& rng) {
  const auto& cfg = model.config();
  std::uniform_real_distribution<double> frac(cfg.context_min,
                                              cfg.context_max);
  const double f = frac(rng);
  ObjectiveDraw draw;
  for (int k = 0; k < model.levels(); ++k) {
    const int n = static_cast<int>(data.features[k].rows());
    const int n_ctx =
        std::clamp(static_cast<int>(std::lround(f * n)), std::min(1, n), n);
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    for (int i = 0; i < n_ctx; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(n_ctx);
    std::sort(rows.begin(), rows.end());
    draw.context.push_back(std::move(rows));
  }
  for (int k = 0; k < model.levels(); ++k)
    draw.noise.push_back(
        standard_normal(cfg.mc_samples, model.latent_dim(), rng));
  return draw;
}

ObjectiveValue training_objective(const SurrogateModel& model,
                                  const TrainingData& data,
                                  const ObjectiveDraw& draw,
                                  ModelGradient* grad) {
  const int K = model.levels();
  const int dz = model.latent_dim();
  const bool want_grad = grad != nullptr;
  const double lambda = model.config().reg_weight;
  detail::require(static_cast<int>(data.features.size()) == K &&
                      static_cast<int>(draw.context.size()) == K &&
                      static_cast<int>(draw.noise.size()) == K,
                  "training_objective: level count mismatch");
  for (int k = 0; k < K; ++k) {
    if (data.features[k].rows() == 0)
      throw DomainError("empty target set at level " + std::to_string(k));
    detail::require(draw.noise[k].cols() == dz && draw.noise[k].rows() >= 1,
                    "training_objective: noise shape mismatch");
  }
  const bool regularize = lambda > 0.0 && K > 1;
  if (regularize)
    for (int k = 0; k < K; ++k)
      if (data.reference_rows[k].empty())
        throw DomainError("reference set is empty at level " +
                          std::to_string(k) +
                          " but the regularizer weight is positive");

  // Encoders over every target point; context rows reuse the same outputs.
  std::vector<EncoderBatch> enc;
  for (int k = 0; k < K; ++k)
    enc.push_back(encode_batch(model, k, data.features[k], data.targets[k],
                               want_grad));

  NaturalParams global_all = NaturalParams::zeros(dz);
  NaturalParams global_ctx = NaturalParams::zeros(dz);
  std::vector<NaturalParams> local_all, local_ctx;
  for (int k = 0; k < K; ++k) {
    add_all_rows(global_all, enc[k].global_mean, enc[k].global_var);
    add_rows(global_ctx, enc[k].global_mean, enc[k].global_var,
             draw.context[k]);
    local_all.push_back(NaturalParams::zeros(dz));
    add_all_rows(local_all[k], enc[k].local_mean, enc[k].local_var);
    local_ctx.push_back(NaturalParams::zeros(dz));
    add_rows(local_ctx[k], enc[k].local_mean, enc[k].local_var,
             draw.context[k]);
  }

  std::vector<Fused> full, ctx, ref;
  for (int k = 0; k < K; ++k) {
    NaturalParams f = NaturalParams::from(model.priors()[k]);
    f += local_all[k];
    f += global_all;
    full.emplace_back(f);
    NaturalParams c = NaturalParams::from(model.priors()[k]);
    c += local_ctx[k];
    c += global_ctx;
    ctx.emplace_back(c);
    NaturalParams r = NaturalParams::from(model.priors()[k]);
    add_rows(r, enc[k].global_mean, enc[k].global_var,
             data.reference_rows[k]);
    ref.emplace_back(r);
  }

  ObjectiveValue value;
  std::vector<ArrayXd> d_full_mean(K, ArrayXd::Zero(dz)),
      d_full_var(K, ArrayXd::Zero(dz)), d_ctx_mean(K, ArrayXd::Zero(dz)),
      d_ctx_var(K, ArrayXd::Zero(dz)), d_ref_mean(K, ArrayXd::Zero(dz)),
      d_ref_var(K, ArrayXd::Zero(dz));

  constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)
  for (int k = 0; k < K; ++k) {
    const MatrixXd& noise = draw.noise[k];
    const int S = static_cast<int>(noise.rows());
    const int N = static_cast<int>(data.features[k].rows());
    const ArrayXd sd = full[k].var.sqrt();

    // Row s*N + n decodes target n with latent sample s.
    MatrixXd latents(S * N, dz);
    for (int s = 0; s < S; ++s) {
      const Eigen::RowVectorXd z =
          (full[k].mean + sd * noise.row(s).transpose().array())
              .matrix()
              .transpose();
      latents.middleRows(s * N, N) = z.replicate(N, 1);
    }
    auto dec = decode_batch(model, k, repeat_rows(data.features[k], S),
                            latents, want_grad);
    const ArrayXXd diff =
        repeat_rows(data.targets[k], S).array() - dec.mean.array();
    const ArrayXXd var = dec.var.array();
    const double ll =
        (-0.5 * (kLog2Pi + var.log()) - diff.square() / (2.0 * var)).sum() / S;

    const DiagGaussian q_full = full[k].gaussian();
    const DiagGaussian q_ctx = ctx[k].gaussian();
    const double kl_value = kl(q_full, q_ctx);
    value.log_likelihood += ll;
    value.kl += kl_value;
    value.loss += -ll + kl_value;

    if (!want_grad) continue;
    // loss = -ll: d/dmean = -(diff/var)/S, d/dvar = -(-1/(2v) + diff^2/(2v^2))/S.
    const ArrayXXd d_mean = -(diff / var) / S;
    const ArrayXXd d_var = (0.5 / var - diff.square() / (2.0 * var.square())) / S;
    const int dy = model.output_dim(k);
    MatrixXd d_raw(S * N, 2 * dy);
    d_raw.leftCols(dy) = d_mean.matrix();
    d_raw.rightCols(dy) =
        (d_var * variance_head_slope(dec.raw.rightCols(dy).array())).matrix();
    MatrixXd d_in = model.decoders()[k].backward(dec.tape, d_raw,
                                                 grad->decoders[k], true);
    const MatrixXd d_z = d_in.rightCols(dz);
    for (int s = 0; s < S; ++s) {
      const ArrayXd dzs = d_z.middleRows(s * N, N).colwise().sum().transpose();
      d_full_mean[k] += dzs;
      d_full_var[k] += dzs * noise.row(s).transpose().array() / (2.0 * sd);
    }
    const KlGrad g = kl_grad(q_full, q_ctx);
    d_full_mean[k] += g.d_p_mean.array();
    d_full_var[k] += g.d_p_var.array();
    d_ctx_mean[k] += g.d_q_mean.array();
    d_ctx_var[k] += g.d_q_var.array();
  }

  if (regularize) {
    const int top = K - 1;
    const DiagGaussian q_top = ref[top].gaussian();
    for (int k = 0; k < top; ++k) {
      const DiagGaussian q_k = ref[k].gaussian();
      value.regularizer += lambda * symmetrized_divergence(q_k, q_top);
      if (!want_grad) continue;
      const KlGrad a = kl_grad(q_k, q_top);
      const KlGrad b = kl_grad(q_top, q_k);
      d_ref_mean[k] += 0.5 * lambda * (a.d_p_mean + b.d_q_mean).array();
      d_ref_var[k] += 0.5 * lambda * (a.d_p_var + b.d_q_var).array();
      d_ref_mean[top] += 0.5 * lambda * (a.d_q_mean + b.d_p_mean).array();
      d_ref_var[top] += 0.5 * lambda * (a.d_q_var + b.d_p_var).array();
    }
    value.loss += value.regularizer;
  }

  if (!want_grad) return value;

  // Back through the closed-form aggregation to every encoding.
  std::vector<ArrayXd> ds_full(K), dp_full(K), ds_ctx(K), dp_ctx(K), ds_ref(K),
      dp_ref(K);
  ArrayXd ds_gall = ArrayXd::Zero(dz), dp_gall = ArrayXd::Zero(dz);
  ArrayXd ds_gctx = ArrayXd::Zero(dz), dp_gctx = ArrayXd::Zero(dz);
  for (int k = 0; k < K; ++k) {
    full[k].backward(d_full_mean[k], d_full_var[k], ds_full[k], dp_full[k]);
    ctx[k].backward(d_ctx_mean[k], d_ctx_var[k], ds_ctx[k], dp_ctx[k]);
    ref[k].backward(d_ref_mean[k], d_ref_var[k], ds_ref[k], dp_ref[k]);
    ds_gall += ds_full[k];
    dp_gall += dp_full[k];
    ds_gctx += ds_ctx[k];
    dp_gctx += dp_ctx[k];
  }

  for (int k = 0; k < K; ++k) {
    const int N = static_cast<int>(data.features[k].rows());
    const auto& e = enc[k];
    ArrayXXd ds_local = ds_full[k].transpose().replicate(N, 1);
    ArrayXXd dp_local = dp_full[k].transpose().replicate(N, 1);
    ArrayXXd ds_global = ds_gall.transpose().replicate(N, 1);
    ArrayXXd dp_global = dp_gall.transpose().replicate(N, 1);
    for (int r : draw.context[k]) {
      ds_local.row(r) += ds_ctx[k].transpose();
      dp_local.row(r) += dp_ctx[k].transpose();
      ds_global.row(r) += ds_gctx.transpose();
      dp_global.row(r) += dp_gctx.transpose();
    }
    for (int r : data.reference_rows[k]) {
      ds_global.row(r) += ds_ref[k].transpose();
      dp_global.row(r) += dp_ref[k].transpose();
    }
    const ArrayXXd lv = e.local_var.array(), gv = e.global_var.array();
    const ArrayXXd d_lmean = ds_local / lv;
    const ArrayXXd d_lvar = -(ds_local * e.local_mean.array() + dp_local) /
                            lv.square();
    const ArrayXXd d_gmean = ds_global / gv;
    const ArrayXXd d_gvar = -(ds_global * e.global_mean.array() + dp_global) /
                            gv.square();
    MatrixXd d_raw(N, 4 * dz);
    d_raw.leftCols(dz) = d_lmean.matrix();
    d_raw.middleCols(dz, dz) =
        (d_lvar * variance_head_slope(e.raw.middleCols(dz, dz).array()))
            .matrix();
    d_raw.middleCols(2 * dz, dz) = d_gmean.matrix();
    d_raw.rightCols(dz) =
        (d_gvar * variance_head_slope(e.raw.rightCols(dz).array())).matrix();
    model.encoders()[k].backward(e.tape, d_raw, grad->encoders[k]);
  }
  return value;
}

// ---- Training ---------------------------------------------------------------

TrainReport train(SurrogateModel& model, std::span<const LevelSamples> levels,
                  std::span<const std::int64_t> reference_ids, int epochs) {
  detail::require(static_cast<int>(levels.size()) == model.levels(),
                  "train: dataset has " + std::to_string(levels.size()) +
                      " levels, model has " + std::to_string(model.levels()));
  for (int k = 0; k < model.levels(); ++k)
    if (levels[k].size() == 0)
      throw DomainError("train: level " + std::to_string(k) + " has no data");
  const int n_epochs = epochs < 0 ? model.config().epochs : epochs;

  std::vector<OutputScaling> scaling;
  for (const auto& lv : levels) scaling.push_back(OutputScaling::fit(lv.outputs));
  model.set_output_scaling(std::move(scaling));
  const TrainingData data = prepare_training_data(model, levels, reference_ids);

  Adam adam(model, model.config().learning_rate);
  ModelGradient grad = ModelGradient::zeros_like(model);
  TrainReport report;
  report.losses.reserve(n_epochs);
  const std::int64_t start = model.epochs_trained();
  for (int e = 0; e < n_epochs; ++e) {
    Rng rng = substream(model.config().seed,
                        {stream::epoch, static_cast<std::uint64_t>(start + e)});
    const ObjectiveDraw draw = draw_objective(model, data, rng);
    grad.set_zero();
    const ObjectiveValue v = training_objective(model, data, draw, &grad);
    if (!std::isfinite(v.loss))
      throw TrainingError("non-finite loss at epoch " +
                          std::to_string(start + e) +
                          " (log-likelihood " +
                          std::to_string(v.log_likelihood) + ", kl " +
                          std::to_string(v.kl) + ", regularizer " +
                          std::to_string(v.regularizer) + ")");
    adam.step(model, grad);
    report.losses.push_back(v.loss);
  }
  model.set_training_state(true, start + n_epochs);
  return report;
}

TrainReport train(SurrogateModel& model, const MultiFidelityDataset& data,
                  int epochs) {
  return train(model, data.levels, data.reference_ids, epochs);
}

// ---- Prediction -------------------------------------------------------------

Prediction predict(const SurrogateModel& model, const PosteriorState& state,
                   int level, const MatrixXd& x, int n_samples,
                   std::uint64_t seed) {
  if (!model.trained()) throw DomainError("predict: model is untrained");
  if (n_samples < 0) throw DomainError("predict: n_samples must be >= 0");
  const auto& os = model.output_scaling().at(level);
  const DiagGaussian q = state.posterior(level);
  const MatrixXd f = model.feature_scaling().apply(x);
  const Eigen::Index n = x.rows();
  Prediction out;
  if (n_samples == 0) {
    auto b = decode_batch(model, level, f, q.mean().transpose().replicate(n, 1));
    out.mean = destandardize_mean(os, b.mean);
    out.var = b.var * (os.scale * os.scale);
    out.decoder_var = out.var;
    return out;
  }
  Rng rng = substream(seed, {stream::predict});
  const MatrixXd eps = standard_normal(n_samples, model.latent_dim(), rng);
  MatrixXd latents(n_samples * n, model.latent_dim());
  for (int s = 0; s < n_samples; ++s) {
    Eigen::RowVectorXd z = (q.mean().array() +
                            q.var().array().sqrt() * eps.row(s).transpose().array())
                               .matrix()
                               .transpose();
    latents.middleRows(s * n, n) = z.replicate(n, 1);
  }
  auto b = decode_batch(model, level, repeat_rows(f, n_samples), latents);
  MatrixXd mean = MatrixXd::Zero(n, b.mean.cols());
  MatrixXd var = MatrixXd::Zero(n, b.mean.cols());
  for (int s = 0; s < n_samples; ++s) mean += b.mean.middleRows(s * n, n);
  mean /= n_samples;
  MatrixXd decoder_var = MatrixXd::Zero(n, b.mean.cols());
  for (int s = 0; s < n_samples; ++s) {
    decoder_var += b.var.middleRows(s * n, n);
    var.array() += (b.mean.middleRows(s * n, n) - mean).array().square();
  }
  decoder_var /= n_samples;
  var = var / n_samples + decoder_var;
  out.mean = destandardize_mean(os, mean);
  out.var = var * (os.scale * os.scale);
  out.decoder_var = decoder_var * (os.scale * os.scale);
  return out;
}

Prediction predict(const SurrogateModel& model,
                   std::span<const LevelSamples> context, int level,
                   const MatrixXd& x, int n_samples, std::uint64_t seed) {
  if (!model.trained()) throw DomainError("predict: model is untrained");
  const auto encodings = encode_all(model, context);
  return predict(model, PosteriorState(model, encodings), level, x, n_samples,
                 seed);
}

}  // namespace mfdal
