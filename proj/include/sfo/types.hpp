#pragma once

#include <Eigen/Dense>

namespace sfo {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace sfo
