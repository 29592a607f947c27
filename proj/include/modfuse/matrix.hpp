#pragma once

#include <Eigen/Dense>

namespace modfuse {

// Row-major so that row i is one token / one acoustic-frequency trajectory.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace modfuse
