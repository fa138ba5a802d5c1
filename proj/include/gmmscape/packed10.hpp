#pragma once

#include <Eigen/Core>

#include "gmmscape/common.hpp"

namespace gmmscape {

// Symmetric 4x4 matrices are stored as 10 values: the lower triangle in
// row-major order (0,0),(1,0),(1,1),(2,0),(2,1),(2,2),(3,0),(3,1),(3,2),(3,3).
using Vec10 = Eigen::Matrix<double, 10, 1>;

inline constexpr int kPackedRow[10] = {0, 1, 1, 2, 2, 2, 3, 3, 3, 3};
inline constexpr int kPackedCol[10] = {0, 0, 1, 0, 1, 2, 0, 1, 2, 3};

inline Vec10 pack_symmetric4(const Mat4& m) {
  Vec10 p;
  for (int k = 0; k < 10; ++k) p[k] = m(kPackedRow[k], kPackedCol[k]);
  return p;
}

inline Mat4 unpack_symmetric4(const Vec10& p) {
  Mat4 m;
  for (int k = 0; k < 10; ++k) {
    m(kPackedRow[k], kPackedCol[k]) = p[k];
    m(kPackedCol[k], kPackedRow[k]) = p[k];
  }
  return m;
}

}  // namespace gmmscape
