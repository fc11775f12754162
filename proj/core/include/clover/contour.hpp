#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "clover/misgp.hpp"

namespace clover {

/// Zero-contour estimate of the posterior mean of the unbiased process on a
/// regular output grid: the sign of the mean at every grid node, plus (for
/// d <= 2) zero crossings located by linear interpolation along grid edges.
/// For d == 2 the crossings are stitched into polylines with
/// marching-squares connectivity; ambiguous saddle cells are split by the
/// sign of the mean at the cell center.
struct ContourResult {
  std::vector<Eigen::VectorXd> axes;       // grid coordinates per dimension
  std::vector<signed char> signs;          // row-major, last dimension fastest
  std::vector<Eigen::MatrixXd> polylines;  // one point per row; d == 1 gives single points

  std::string sign_grid_csv() const;
  std::string polyline_csv() const;
};

ContourResult extract_contour(const MultiSourceGp& state, int nodes_per_dim);

}  // namespace clover
