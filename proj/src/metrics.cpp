#include "mfdal/metrics.hpp"

#include "mfdal/errors.hpp"

namespace mfdal {

double nrmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  detail::require(pred.rows() == truth.rows() && pred.cols() == truth.cols(),
                  "nrmse: prediction and truth shapes differ");
  const double denom = truth.norm();
  if (!(denom > 0.0)) throw DomainError("nrmse: truth is identically zero");
  return (pred - truth).norm() / denom;
}

}  // namespace mfdal
