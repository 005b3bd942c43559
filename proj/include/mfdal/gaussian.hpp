#pragma once

#include <span>

#include <Eigen/Core>

namespace mfdal {

/// Lower bound applied to every variance the library produces.
inline constexpr double kVarFloor = 1e-6;

/// Factorized Gaussian N(mean, diag(var)).
///
/// Variances below kVarFloor are raised to it on construction, so every
/// DiagGaussian in circulation satisfies var >= kVarFloor. Non-finite entries
/// and non-positive variances are rejected.
class DiagGaussian {
 public:
  DiagGaussian() = default;
  DiagGaussian(Eigen::VectorXd mean, Eigen::VectorXd var);

  static DiagGaussian standard(Eigen::Index dim);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  Eigen::Index dim() const { return mean_.size(); }

  friend bool operator==(const DiagGaussian& a, const DiagGaussian& b) {
    return a.mean_ == b.mean_ && a.var_ == b.var_;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
};

double log_density(const DiagGaussian& g, const Eigen::VectorXd& v);

/// KL(p || q) in closed form.
double kl(const DiagGaussian& p, const DiagGaussian& q);

/// 0.5 * (KL(p||q) + KL(q||p)).
double symmetrized_divergence(const DiagGaussian& p, const DiagGaussian& q);

/// mean + sqrt(var) * noise.
Eigen::VectorXd reparam_sample(const DiagGaussian& g,
                               const Eigen::VectorXd& noise);

/// Precision-weighted fusion of a prior with independent Gaussian
/// observations of the same latent. An empty observation list returns the
/// prior unchanged.
DiagGaussian fuse(const DiagGaussian& prior,
                  std::span<const DiagGaussian> observations);

// Analytic partial derivatives. All are element-wise vectors matching the
// argument dimension.

struct LogDensityGrad {
  Eigen::VectorXd d_mean, d_var, d_value;
};
LogDensityGrad log_density_grad(const DiagGaussian& g,
                                const Eigen::VectorXd& v);

struct KlGrad {
  Eigen::VectorXd d_p_mean, d_p_var, d_q_mean, d_q_var;
};
KlGrad kl_grad(const DiagGaussian& p, const DiagGaussian& q);

/// Diagonal Jacobian of reparam_sample: d out / d mean is the identity.
struct ReparamGrad {
  Eigen::VectorXd d_var;  // noise / (2 sqrt(var))
};
ReparamGrad reparam_sample_grad(const DiagGaussian& g,
                                const Eigen::VectorXd& noise);

/// Natural-parameter accumulator for precision-weighted fusion:
/// precision = sum 1/var, shift = sum mean/var. Posterior mean is
/// shift/precision. Addition is commutative and associative, which is what
/// makes context aggregation permutation invariant.
struct NaturalParams {
  Eigen::ArrayXd precision;
  Eigen::ArrayXd shift;

  static NaturalParams zeros(Eigen::Index dim);
  static NaturalParams from(const DiagGaussian& g);

  void add(const Eigen::ArrayXd& mean, const Eigen::ArrayXd& var) {
    precision += var.inverse();
    shift += mean / var;
  }
  NaturalParams& operator+=(const NaturalParams& o) {
    precision += o.precision;
    shift += o.shift;
    return *this;
  }
  DiagGaussian to_gaussian() const;
};

}  // namespace mfdal
