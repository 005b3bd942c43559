#include "mfdal/mlp.hpp"

#include <cmath>

#include "mfdal/errors.hpp"

namespace mfdal {

Mlp::Mlp(int input_dim, int hidden_width, int hidden_layers, int output_dim,
         Rng& rng) {
  detail::require(input_dim > 0 && output_dim > 0 && hidden_width > 0 &&
                      hidden_layers >= 0,
                  "Mlp: invalid layer sizes");
  std::vector<int> widths{input_dim};
  for (int i = 0; i < hidden_layers; ++i) widths.push_back(hidden_width);
  widths.push_back(output_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    // Glorot-normal initialization, zero bias.
    const double scale = std::sqrt(2.0 / (widths[l] + widths[l + 1]));
    layer.weight.resize(widths[l], widths[l + 1]);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
        layer.weight(i, j) = scale * normal(rng);
    layer.bias = Eigen::RowVectorXd::Zero(widths[l + 1]);
    layers_.push_back(std::move(layer));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  detail::require(x.cols() == input_dim(),
                  "Mlp::forward: expected input width " +
                      std::to_string(input_dim()) + ", got " +
                      std::to_string(x.cols()));
  if (tape) tape->inputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Eigen::MatrixXd a = h * layer.weight;
    a.rowwise() += layer.bias;
    if (l + 1 < layers_.size()) a = a.array().tanh().matrix();
    if (tape) tape->inputs.push_back(std::move(h));
    h = std::move(a);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out,
                              Mlp& grad, bool want_input_grad) const {
  detail::require(tape.inputs.size() == layers_.size(),
                  "Mlp::backward: tape does not match network");
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = tape.inputs[l];
    auto& g = grad.layers_[l];
    g.weight.noalias() += in.transpose() * delta;
    g.bias += delta.colwise().sum();
    if (l == 0 && !want_input_grad) return {};
    Eigen::MatrixXd d_in = delta * layers_[l].weight.transpose();
    if (l == 0) return d_in;
    // `in` is the tanh output of the previous layer.
    delta = (d_in.array() * (1.0 - in.array().square())).matrix();
  }
  return {};
}

Mlp Mlp::zeros_like() const {
  Mlp out = *this;
  for (auto& layer : out.layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return out;
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const double*, Eigen::Index size) { n += size; });
  return n;
}

Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) {
  return 1.0 / (1.0 + (-x).exp());
}

}  // namespace mfdal
