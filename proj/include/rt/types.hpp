#pragma once

#include <Eigen/Dense>

namespace rt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Cell-block field: one row per mobile total, one column per grid cell.
// Flattening column-major (Eigen's default) keeps all unknowns belonging to
// one grid point contiguous, which is the layout the coupled solvers assume.
using Field = Eigen::MatrixXd;

}  // namespace rt
