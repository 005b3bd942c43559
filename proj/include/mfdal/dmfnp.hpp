#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mfdal/gaussian.hpp"
#include "mfdal/mlp.hpp"
#include "mfdal/pde.hpp"

namespace mfdal {

/// Hyperparameters of a disentangled multi-fidelity neural process.
struct SurrogateConfig {
  int latent_dim = 16;
  int hidden_width = 128;
  int hidden_layers = 2;
  double learning_rate = 1e-3;
  int epochs = 2000;
  int mc_samples = 4;
  double context_min = 0.3;  // per-epoch context fraction ~ U[min, max]
  double context_max = 0.9;
  double reg_weight = 1.0;  // weight of the cross-fidelity reference term
  std::uint64_t seed = 0;

  void validate() const;
};

/// Affine input map x -> (x - offset) / scale applied before every network.
struct FeatureScaling {
  Eigen::RowVectorXd offset;
  Eigen::RowVectorXd scale;

  static FeatureScaling identity(int dim);
  static FeatureScaling from_task(const TaskSpec& task);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Per-level output standardization: per-component mean, one shared scale.
struct OutputScaling {
  Eigen::RowVectorXd mean;
  double scale = 1.0;

  static OutputScaling identity(int dim);
  static OutputScaling fit(const Eigen::MatrixXd& y);
};

/// Local and global representation Gaussians emitted by the level-`level`
/// encoder for one context pair.
struct ContextEncoding {
  DiagGaussian local;
  DiagGaussian global;
  int level = 0;
  std::int64_t scenario = -1;
};

/// q(z_k | context) for every level k.
struct LatentPosteriors {
  std::vector<DiagGaussian> levels;
};

class SurrogateModel;

/// Parameter-shaped gradient (also used for optimizer moments).
struct ModelGradient {
  std::vector<Mlp> encoders;
  std::vector<Mlp> decoders;

  static ModelGradient zeros_like(const SurrogateModel& model);
  void set_zero();
  std::vector<double> flatten() const;
};

/// K per-level encoders (input: features ++ y_k, output: local and global
/// mean/variance heads) and K per-level decoders (input: features ++ z_k,
/// output: predictive mean/variance of y_k), with fixed factorized priors.
class SurrogateModel {
 public:
  SurrogateModel(int input_dim, std::vector<int> output_dims,
                 SurrogateConfig config, FeatureScaling scaling);
  static SurrogateModel for_task(const TaskSpec& task, SurrogateConfig config);

  int levels() const { return static_cast<int>(output_dims_.size()); }
  int top_level() const { return levels() - 1; }
  int input_dim() const { return input_dim_; }
  int output_dim(int level) const;
  const std::vector<int>& output_dims() const { return output_dims_; }
  int latent_dim() const { return config_.latent_dim; }

  const SurrogateConfig& config() const { return config_; }
  SurrogateConfig& config() { return config_; }

  bool trained() const { return trained_; }
  std::int64_t epochs_trained() const { return epochs_trained_; }

  const std::vector<DiagGaussian>& priors() const { return priors_; }
  const FeatureScaling& feature_scaling() const { return features_; }
  const std::vector<OutputScaling>& output_scaling() const { return outputs_; }
  std::vector<Mlp>& encoders() { return encoders_; }
  const std::vector<Mlp>& encoders() const { return encoders_; }
  std::vector<Mlp>& decoders() { return decoders_; }
  const std::vector<Mlp>& decoders() const { return decoders_; }

  /// Fresh network weights from config().seed; clears the trained state.
  void reinitialize();

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  // State restored by checkpoint loading and set by training.
  void set_output_scaling(std::vector<OutputScaling> s);
  void set_feature_scaling(FeatureScaling s);
  void set_training_state(bool trained, std::int64_t epochs);
  void set_priors(std::vector<DiagGaussian> priors);

 private:
  int input_dim_;
  std::vector<int> output_dims_;
  SurrogateConfig config_;
  FeatureScaling features_;
  std::vector<OutputScaling> outputs_;
  std::vector<Mlp> encoders_;
  std::vector<Mlp> decoders_;
  std::vector<DiagGaussian> priors_;
  bool trained_ = false;
  std::int64_t epochs_trained_ = 0;
};

// ---- Batched network heads (standardized space) ---------------------------

struct EncoderBatch {
  Eigen::MatrixXd local_mean, local_var, global_mean, global_var;  // N x d_z
  Eigen::MatrixXd raw;  // N x 4 d_z head pre-activations
  Mlp::Tape tape;
};

/// Encodes N pairs given normalized features and standardized outputs.
EncoderBatch encode_batch(const SurrogateModel& model, int level,
                          const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& y_std, bool keep_tape = false);

struct DecoderBatch {
  Eigen::MatrixXd mean, var;  // rows x d_y, standardized
  Eigen::MatrixXd raw;
  Mlp::Tape tape;
};

/// Decodes rows of (normalized features, latent).
DecoderBatch decode_batch(const SurrogateModel& model, int level,
                          const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& latents,
                          bool keep_tape = false);

// ---- Public single-point operations (physical units) ----------------------

ContextEncoding encode(const SurrogateModel& model, int level,
                       const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                       std::int64_t scenario = -1);

/// Encodes every sample of every level.
std::vector<ContextEncoding> encode_all(const SurrogateModel& model,
                                        std::span<const LevelSamples> levels);

/// Predictive Gaussian over y_k (physical units) for latent z and input x.
DiagGaussian decode(const SurrogateModel& model, int level,
                    const Eigen::VectorXd& z, const Eigen::VectorXd& x);

/// Running closed-form aggregation. q(z_k) fuses the level-k prior with
/// every local encoding of level k and every global encoding of any level.
class PosteriorState {
 public:
  explicit PosteriorState(const SurrogateModel& model);
  PosteriorState(const SurrogateModel& model,
                 std::span<const ContextEncoding> encodings);

  void add(const ContextEncoding& e);
  int levels() const { return static_cast<int>(priors_.size()); }
  NaturalParams natural(int level) const;
  DiagGaussian posterior(int level) const;
  LatentPosteriors posteriors() const;
  const std::vector<ContextEncoding>& encodings() const { return encodings_; }

 private:
  std::vector<DiagGaussian> priors_;
  std::vector<NaturalParams> local_;
  NaturalParams global_;
  std::vector<ContextEncoding> encodings_;
};

LatentPosteriors aggregate(const SurrogateModel& model,
                           std::span<const ContextEncoding> encodings);

/// q(z_K) after adding `candidate` to `current`.
DiagGaussian hypothetical_posterior(const SurrogateModel& model,
                                    std::span<const ContextEncoding> current,
                                    const ContextEncoding& candidate);
DiagGaussian hypothetical_posterior(const SurrogateModel& model,
                                    std::span<const ContextEncoding> current,
                                    const Eigen::VectorXd& x, int level,
                                    const Eigen::VectorXd& y);

// ---- Training ---------------------------------------------------------------

/// Model-space view of a training set: normalized features, standardized
/// outputs and the rows of each level that belong to the reference set.
struct TrainingData {
  std::vector<Eigen::MatrixXd> features;
  std::vector<Eigen::MatrixXd> targets;
  std::vector<std::vector<int>> reference_rows;
};

TrainingData prepare_training_data(const SurrogateModel& model,
                                   std::span<const LevelSamples> levels,
                                   std::span<const std::int64_t> reference_ids);

/// Random quantities of one objective evaluation.
struct ObjectiveDraw {
  std::vector<std::vector<int>> context;  // per level, row indices
  std::vector<Eigen::MatrixXd> noise;     // per level, S x d_z
};

ObjectiveDraw draw_objective(const SurrogateModel& model,
                             const TrainingData& data, Rng& rng);

struct ObjectiveValue {
  double loss = 0.0;
  double log_likelihood = 0.0;  // summed over levels, averaged over samples
  double kl = 0.0;
  double regularizer = 0.0;  // weighted
};

/// Negative Monte-Carlo ELBO plus the weighted reference regularizer.
/// Accumulates d loss / d parameters into `grad` when provided.
ObjectiveValue training_objective(const SurrogateModel& model,
                                  const TrainingData& data,
                                  const ObjectiveDraw& draw,
                                  ModelGradient* grad = nullptr);

struct TrainReport {
  std::vector<double> losses;  // one per epoch
};

/// Adam on the full-batch objective; continues from the current weights.
/// Output scaling is refit to `levels` first. `epochs` < 0 uses the config.
TrainReport train(SurrogateModel& model, std::span<const LevelSamples> levels,
                  std::span<const std::int64_t> reference_ids,
                  int epochs = -1);
TrainReport train(SurrogateModel& model, const MultiFidelityDataset& data,
                  int epochs = -1);

// ---- Prediction -------------------------------------------------------------

struct Prediction {
  Eigen::MatrixXd mean;  // rows x d_y, physical units
  Eigen::MatrixXd var;
  // Decoder variance averaged over latent draws (equals var when plug-in);
  // var - decoder_var is the spread contributed by the latent.
  Eigen::MatrixXd decoder_var;
};

/// Predicts y_k at each row of `x`, conditioning on every sample of
/// `context`. n_samples == 0 decodes the posterior-mean latent; otherwise
/// latent draws are moment-matched.
Prediction predict(const SurrogateModel& model,
                   std::span<const LevelSamples> context, int level,
                   const Eigen::MatrixXd& x, int n_samples = 0,
                   std::uint64_t seed = 0);
Prediction predict(const SurrogateModel& model, const PosteriorState& state,
                   int level, const Eigen::MatrixXd& x, int n_samples = 0,
                   std::uint64_t seed = 0);

}  // namespace mfdal
