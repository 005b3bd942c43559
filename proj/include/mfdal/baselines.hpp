#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mfdal/dmfnp.hpp"
#include "mfdal/pde.hpp"

namespace mfdal {

// ---- Single-fidelity NP -------------------------------------------------------

/// The one-level, unregularized surrogate used by SF-NP on a task.
SurrogateModel make_sfnp(const TaskSpec& task, SurrogateConfig config);

/// Trains SF-NP on the highest level of `data` only. Throws DomainError when
/// that level is empty.
SurrogateModel train_sfnp(const MultiFidelityDataset& data,
                          SurrogateConfig config, int epochs = -1);

/// Predicts the highest level, conditioning on the highest-level samples.
Prediction predict_sfnp(const SurrogateModel& model,
                        const MultiFidelityDataset& context,
                        const Eigen::MatrixXd& x);

// ---- Multi-fidelity NP on paired data ---------------------------------------

/// (x, y_low, y_high) triples for scenarios present at both the lowest and
/// the highest level, matched by scenario id.
struct PairedDataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd low;
  Eigen::MatrixXd high;
  std::vector<std::int64_t> scenario_ids;
  int low_level = 0;
  int high_level = 0;

  Eigen::Index size() const { return inputs.rows(); }
  /// Rows of [x, y_low] for the network.
  Eigen::MatrixXd features() const;
};

PairedDataset pair_nested(const MultiFidelityDataset& data);

/// NP over inputs (x ++ y_low) and outputs y_high.
struct MfnpModel {
  SurrogateModel net;
  TaskSpec task;
  int low_level = 0;
  int high_level = 0;
};

/// Throws DomainError on an empty paired set.
MfnpModel train_mfnp(const PairedDataset& paired, const TaskSpec& task,
                     SurrogateConfig config, int epochs = -1);

/// Predicts y_high at rows of `x` given the matching low-level outputs.
Prediction predict_mfnp(const MfnpModel& model, const PairedDataset& context,
                        const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_low);

struct SimulatedPrediction {
  Prediction prediction;
  double low_fidelity_cost = 0.0;  // simulator cost spent on y_low
};

/// As predict_mfnp, but y_low comes from the low-fidelity simulator.
SimulatedPrediction predict_mfnp(const MfnpModel& model,
                                 const PairedDataset& context,
                                 const Eigen::MatrixXd& x);

}  // namespace mfdal
