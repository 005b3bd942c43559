#include "mfdal/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* op) {
  if (a != b)
    throw ContractError(std::string(op) + ": dimension mismatch (" +
                        std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

DiagGaussian::DiagGaussian(Eigen::VectorXd mean, Eigen::VectorXd var)
    : mean_(std::move(mean)), var_(std::move(var)) {
  require_same_dim(mean_.size(), var_.size(), "DiagGaussian");
  if (!mean_.allFinite() || !var_.allFinite())
    throw ContractError("DiagGaussian: non-finite mean or variance");
  if ((var_.array() <= 0.0).any())
    throw ContractError("DiagGaussian: variance must be positive");
  var_ = var_.cwiseMax(kVarFloor);
}

DiagGaussian DiagGaussian::standard(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

double log_density(const DiagGaussian& g, const Eigen::VectorXd& v) {
  require_same_dim(g.dim(), v.size(), "log_density");
  const auto var = g.var().array();
  const auto diff = v.array() - g.mean().array();
  return (-0.5 * (2.0 * std::numbers::pi * var).log() -
          diff.square() / (2.0 * var))
      .sum();
}

double kl(const DiagGaussian& p, const DiagGaussian& q) {
  require_same_dim(p.dim(), q.dim(), "kl");
  const auto pv = p.var().array();
  const auto qv = q.var().array();
  const auto dm = q.mean().array() - p.mean().array();
  const double value =
      0.5 * (pv / qv + dm.square() / qv - 1.0 + (qv / pv).log()).sum();
  // Round-off can leave -1e-17 for identical arguments.
  return value < 0.0 ? 0.0 : value;
}

double symmetrized_divergence(const DiagGaussian& p, const DiagGaussian& q) {
  require_same_dim(p.dim(), q.dim(), "symmetrized_divergence");
  // Written symmetrically so that swapping the arguments is bit-exact.
  const auto pv = p.var().array();
  const auto qv = q.var().array();
  const auto dm2 = (q.mean().array() - p.mean().array()).square();
  const double value =
      0.25 * (pv / qv + qv / pv - 2.0 + dm2 * (pv.inverse() + qv.inverse()))
                 .sum();
  return value < 0.0 ? 0.0 : value;
}

Eigen::VectorXd reparam_sample(const DiagGaussian& g,
                               const Eigen::VectorXd& noise) {
  require_same_dim(g.dim(), noise.size(), "reparam_sample");
  return (g.mean().array() + g.var().array().sqrt() * noise.array()).matrix();
}

DiagGaussian fuse(const DiagGaussian& prior,
                  std::span<const DiagGaussian> observations) {
  if (observations.empty()) return prior;
  Eigen::ArrayXd precision = prior.var().array().inverse();
  Eigen::ArrayXd weighted = Eigen::ArrayXd::Zero(prior.dim());
  for (const auto& o : observations) {
    require_same_dim(prior.dim(), o.dim(), "fuse");
    precision += o.var().array().inverse();
    weighted += (o.mean().array() - prior.mean().array()) / o.var().array();
  }
  Eigen::ArrayXd var = precision.inverse();
  Eigen::ArrayXd mean = prior.mean().array() + var * weighted;
  return {mean.matrix(), var.matrix()};
}

LogDensityGrad log_density_grad(const DiagGaussian& g,
                                const Eigen::VectorXd& v) {
  require_same_dim(g.dim(), v.size(), "log_density_grad");
  const Eigen::ArrayXd var = g.var().array();
  const Eigen::ArrayXd diff = v.array() - g.mean().array();
  LogDensityGrad out;
  out.d_mean = (diff / var).matrix();
  out.d_var = (-0.5 / var + diff.square() / (2.0 * var.square())).matrix();
  out.d_value = -out.d_mean;
  return out;
}

KlGrad kl_grad(const DiagGaussian& p, const DiagGaussian& q) {
  require_same_dim(p.dim(), q.dim(), "kl_grad");
  const Eigen::ArrayXd pv = p.var().array();
  const Eigen::ArrayXd qv = q.var().array();
  const Eigen::ArrayXd dm = q.mean().array() - p.mean().array();
  KlGrad out;
  out.d_p_mean = (-dm / qv).matrix();
  out.d_q_mean = (dm / qv).matrix();
  out.d_p_var = (0.5 * (qv.inverse() - pv.inverse())).matrix();
  out.d_q_var =
      (0.5 * (qv.inverse() - pv / qv.square() - dm.square() / qv.square()))
          .matrix();
  return out;
}

ReparamGrad reparam_sample_grad(const DiagGaussian& g,
                                const Eigen::VectorXd& noise) {
  require_same_dim(g.dim(), noise.size(), "reparam_sample_grad");
  return {(noise.array() / (2.0 * g.var().array().sqrt())).matrix()};
}

NaturalParams NaturalParams::zeros(Eigen::Index dim) {
  return {Eigen::ArrayXd::Zero(dim), Eigen::ArrayXd::Zero(dim)};
}

NaturalParams NaturalParams::from(const DiagGaussian& g) {
  return {g.var().array().inverse(), g.mean().array() / g.var().array()};
}

DiagGaussian NaturalParams::to_gaussian() const {
  return {(shift / precision).matrix(), precision.inverse().matrix()};
}

}  // namespace mfdal
