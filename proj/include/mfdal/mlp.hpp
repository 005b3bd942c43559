#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "mfdal/random.hpp"

namespace mfdal {

struct DenseLayer {
  Eigen::MatrixXd weight;  // in x out
  Eigen::RowVectorXd bias;
};

/// Feed-forward network with tanh hidden activations and a linear output
/// layer. Batches are row-major in the sense that each row is one sample.
///
/// The parameter gradient of an Mlp is stored in another Mlp of identical
/// shape, which keeps optimizer state and serialization trivial.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, int hidden_width, int hidden_layers, int output_dim,
      Rng& rng);

  /// Activations retained by forward() for the backward pass.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;

  /// Accumulates parameter gradients into `grad` and returns dLoss/dInput
  /// when `want_input_grad` is set (an empty matrix otherwise).
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& d_out,
                           Mlp& grad, bool want_input_grad = false) const;

  Mlp zeros_like() const;

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

/// Visits every parameter tensor of `nets` (weights then bias, layer by
/// layer) as a flat contiguous span, in deterministic order.
template <typename F>
void for_each_tensor(Mlp& net, F&& f) {
  for (auto& layer : net.layers()) {
    f(layer.weight.data(), layer.weight.size());
    f(layer.bias.data(), layer.bias.size());
  }
}

template <typename F>
void for_each_tensor(const Mlp& net, F&& f) {
  for (const auto& layer : net.layers()) {
    f(layer.weight.data(), layer.weight.size());
    f(layer.bias.data(), layer.bias.size());
  }
}

/// log(1 + exp(x)) without overflow.
Eigen::ArrayXXd softplus(const Eigen::ArrayXXd& x);
Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x);

}  // namespace mfdal
