#pragma once

#include <Eigen/Core>

namespace mfdal {

/// ||pred - truth||_F / ||truth||_F. Throws ContractError on a shape
/// mismatch and DomainError when truth is identically zero.
double nrmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

}  // namespace mfdal
