#include "mfdal/baselines.hpp"

#include <unordered_map>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

SurrogateConfig single_level(SurrogateConfig c) {
  c.reg_weight = 0.0;
  return c;
}

LevelSamples paired_samples(const PairedDataset& p) {
  return {p.features(), p.high, p.scenario_ids};
}

}  // namespace

SurrogateModel make_sfnp(const TaskSpec& task, SurrogateConfig config) {
  task.validate();
  return SurrogateModel(task.input_dim(), {task.output_dims().back()},
                        single_level(config), FeatureScaling::from_task(task));
}

SurrogateModel train_sfnp(const MultiFidelityDataset& data,
                          SurrogateConfig config, int epochs) {
  if (data.levels.empty() || data.levels.back().size() == 0)
    throw DomainError("SF-NP needs highest-level data, none given");
  SurrogateModel model = make_sfnp(data.task, config);
  train(model, std::span(&data.levels.back(), 1), {}, epochs);
  return model;
}

Prediction predict_sfnp(const SurrogateModel& model,
                        const MultiFidelityDataset& context,
                        const Eigen::MatrixXd& x) {
  return predict(model, std::span(&context.levels.back(), 1), 0, x);
}

Eigen::MatrixXd PairedDataset::features() const {
  Eigen::MatrixXd f(inputs.rows(), inputs.cols() + low.cols());
  f << inputs, low;
  return f;
}

PairedDataset pair_nested(const MultiFidelityDataset& data) {
  detail::require(!data.levels.empty(), "pair_nested: dataset has no levels");
  const auto& lo = data.levels.front();
  const auto& hi = data.levels.back();
  PairedDataset p;
  p.low_level = 0;
  p.high_level = static_cast<int>(data.levels.size()) - 1;
  std::unordered_map<std::int64_t, Eigen::Index> low_row;
  for (Eigen::Index i = 0; i < lo.size(); ++i) low_row.emplace(lo.scenario_ids[i], i);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < hi.size(); ++i) {
    auto it = low_row.find(hi.scenario_ids[i]);
    if (it != low_row.end()) rows.emplace_back(it->second, i);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  p.inputs.resize(n, hi.inputs.cols());
  p.low.resize(n, lo.outputs.cols());
  p.high.resize(n, hi.outputs.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    p.inputs.row(r) = hi.inputs.row(rows[r].second);
    p.low.row(r) = lo.outputs.row(rows[r].first);
    p.high.row(r) = hi.outputs.row(rows[r].second);
    p.scenario_ids.push_back(hi.scenario_ids[rows[r].second]);
  }
  return p;
}

MfnpModel train_mfnp(const PairedDataset& paired, const TaskSpec& task,
                     SurrogateConfig config, int epochs) {
  if (paired.size() == 0)
    throw DomainError(
        "MF-NP needs nested data (x, y_low, y_high); no scenario appears at "
        "both the lowest and the highest level, so no data set can be used "
        "for training");
  task.validate();
  const int dx = task.input_dim();
  const int dlow = static_cast<int>(paired.low.cols());
  detail::require(paired.inputs.cols() == dx, "paired inputs width mismatch");

  // x by task ranges; y_low by its own mean and RMS spread.
  const auto low_scale = OutputScaling::fit(paired.low);
  FeatureScaling fsc;
  fsc.offset.resize(dx + dlow);
  fsc.scale.resize(dx + dlow);
  fsc.offset << task.lower.transpose(), low_scale.mean;
  fsc.scale << (task.upper - task.lower).transpose(),
      Eigen::RowVectorXd::Constant(dlow, low_scale.scale);

  MfnpModel m{SurrogateModel(dx + dlow, {static_cast<int>(paired.high.cols())},
                             single_level(config), std::move(fsc)),
              task, paired.low_level, paired.high_level};
  const LevelSamples samples = paired_samples(paired);
  train(m.net, std::span(&samples, 1), {}, epochs);
  return m;
}

Prediction predict_mfnp(const MfnpModel& model, const PairedDataset& context,
                        const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_low) {
  detail::require(x.rows() == y_low.rows(),
                  "predict_mfnp: x and y_low row counts differ");
  Eigen::MatrixXd f(x.rows(), x.cols() + y_low.cols());
  f << x, y_low;
  const LevelSamples samples = paired_samples(context);
  return predict(model.net, std::span(&samples, 1), 0, f);
}

SimulatedPrediction predict_mfnp(const MfnpModel& model,
                                 const PairedDataset& context,
                                 const Eigen::MatrixXd& x) {
  SimulatedPrediction out;
  Eigen::MatrixXd low(x.rows(), model.task.output_dim(model.low_level));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto r = query(model.task, ScenarioInput(model.task, x.row(i).transpose()),
                         model.low_level);
    low.row(i) = r.output.transpose();
    out.low_fidelity_cost += r.cost;
  }
  out.prediction = predict_mfnp(model, context, x, low);
  return out;
}

}  // namespace mfdal
