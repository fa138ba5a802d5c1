#pragma once

#include "gmmscape/common.hpp"

namespace gmmscape {

/// N x 4 sample matrix: columns 0-2 are spatial coordinates in meters,
/// column 3 is intensity in [0, 1].
struct PointCloud4D {
  MatX4 points;

  Eigen::Index size() const { return points.rows(); }

  /// Throws NumericalError if empty, non-finite, or intensity out of range.
  void validate() const {
    if (points.rows() < 1) throw NumericalError("point cloud is empty");
    if (!points.allFinite()) {
      throw NumericalError("point cloud contains non-finite values");
    }
    const auto inten = points.col(3);
    if (inten.minCoeff() < 0.0 || inten.maxCoeff() > 1.0) {
      throw NumericalError("intensity outside [0, 1]");
    }
  }
};

}  // namespace gmmscape
