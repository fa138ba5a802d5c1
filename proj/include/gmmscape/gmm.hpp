#pragma once

#include <cstdint>

#include "gmmscape/common.hpp"
#include "gmmscape/kernels.hpp"
#include "gmmscape/packed10.hpp"

namespace gmmscape {

using MatX10 = Eigen::Matrix<double, Eigen::Dynamic, 10>;

/// 4D Gaussian mixture: weights, means, and packed symmetric covariances
/// (10 values per component, lower triangle in row-major order).
struct Gmm4 {
  static constexpr int kDim = 4;

  VecX weights;        // M
  MatX4 means;         // M x 4
  MatX10 covariances;  // M x 10, packed

  int components() const { return static_cast<int>(weights.size()); }

  Mat4 covariance(int b) const {
    return unpack_symmetric4(covariances.row(b).transpose());
  }

  void set_covariance(int b, const Mat4& cov) {
    covariances.row(b) = pack_symmetric4(cov).transpose();
  }

  /// Checks all type invariants; throws NumericalError on violation.
  void validate() const;
};

/// Serialized size in bytes: 4 bytes per float, 1 weight + 4 mean +
/// 10 covariance values per component.
inline std::int64_t memory_footprint(const Gmm4& model) {
  return std::int64_t{4} * model.components() * (1 + 10 + 4);
}

/// Per-component Cholesky factors L (Sigma = L L^T), precisions P = L^{-1},
/// and the log-determinant terms sum_j ln(diag P)_j = -0.5 ln|Sigma|.
struct CholeskyCache {
  BatchedLower4 lower;
  BatchedLower4 precision;
  VecX log_det_terms;
};

/// Builds the cache. Throws NumericalError naming the first non-SPD
/// component.
CholeskyCache cholesky_cache(const Gmm4& model);

}  // namespace gmmscape
