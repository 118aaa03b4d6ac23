#pragma once

#include <Eigen/Dense>

namespace heavyrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace heavyrl
