#include "gmmscape/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace gmmscape {

bool cholesky4(const Mat4& a, Mat4& lower) {
  lower.setZero();
  for (int j = 0; j < 4; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    lower(j, j) = ljj;
    for (int i = j + 1; i < 4; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / ljj;
    }
  }
  return true;
}

Vec4 tri_lower_solve4(const Mat4& lower, const Vec4& b) {
  Vec4 x;
  for (int i = 0; i < 4; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= lower(i, k) * x[k];
    if (lower(i, i) == 0.0) {
      throw NumericalError("triangular solve: zero diagonal at row " +
                           std::to_string(i));
    }
    x[i] = s / lower(i, i);
  }
  return x;
}

Mat4 lower_inverse4(const Mat4& lower) {
  Mat4 inv = Mat4::Zero();
  for (int c = 0; c < 4; ++c) {
    Vec4 e = Vec4::Zero();
    e[c] = 1.0;
    const Vec4 x = tri_lower_solve4(lower, e);
    for (int r = c; r < 4; ++r) inv(r, c) = x[r];
  }
  return inv;
}

BatchedLower4 batched_cholesky(const BatchedSpd4& blocks) {
  const int count = blocks.count();
  BatchedLower4 factors(count);
  std::atomic<int> first_bad{count};
  const std::int64_t nblocks = detail::num_point_blocks(count);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const int r0 = static_cast<int>(blk * detail::kPointBlock);
    const int r1 = std::min<int>(count, r0 + detail::kPointBlock);
    for (int i = r0; i < r1; ++i) {
      Mat4 lower;
      if (!cholesky4(blocks.block(i), lower)) {
        int expected = first_bad.load();
        while (i < expected && !first_bad.compare_exchange_weak(expected, i)) {
        }
        return;
      }
      factors.block(i) = lower;
    }
  });
  if (first_bad.load() < count) {
    throw NumericalError("cholesky failed: block " +
                         std::to_string(first_bad.load()) +
                         " is not positive definite");
  }
  return factors;
}

MatX4 batched_tri_solve(const BatchedLower4& factors, const MatX4& rhs) {
  if (rhs.rows() != factors.count()) {
    throw NumericalError("batched_tri_solve: rhs row count mismatch");
  }
  MatX4 out(rhs.rows(), 4);
  for (int i = 0; i < factors.count(); ++i) {
    out.row(i) = tri_lower_solve4(factors.block(i), rhs.row(i).transpose())
                     .transpose();
  }
  return out;
}

void batched_tri_solve(const BatchedLower4& factors, Batched4x4& rhs) {
  if (rhs.count() != factors.count()) {
    throw NumericalError("batched_tri_solve: block count mismatch");
  }
  for (int i = 0; i < factors.count(); ++i) {
    auto b = rhs.block(i);
    const Mat4 lower = factors.block(i);
    for (int c = 0; c < 4; ++c) {
      b.col(c) = tri_lower_solve4(lower, b.col(c));
    }
  }
}

VecX logsumexp_rows(const Eigen::Ref<const MatX>& log_matrix) {
  const Eigen::Index n = log_matrix.rows();
  const Eigen::Index m = log_matrix.cols();
  VecX out(n);
  if (n == 0) return out;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const std::int64_t nblocks = detail::num_point_blocks(n);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * detail::kPointBlock;
    const Eigen::Index len =
        std::min<Eigen::Index>(n, r0 + detail::kPointBlock) - r0;
    Eigen::ArrayXd mx = log_matrix.col(0).segment(r0, len).array();
    for (Eigen::Index j = 1; j < m; ++j) {
      mx = mx.max(log_matrix.col(j).segment(r0, len).array());
    }
    // Shifted terms below -700 contribute < 1e-304 against the leading 1;
    // clamping keeps exp() off the denormal slow path.
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(len);
    for (Eigen::Index j = 0; j < m; ++j) {
      acc += (log_matrix.col(j).segment(r0, len).array() - mx)
                 .max(-700.0)
                 .exp();
    }
    Eigen::ArrayXd res = mx + acc.log();
    // Rows that are entirely -inf produce nan through the shift; pin them.
    for (Eigen::Index i = 0; i < len; ++i) {
      if (mx[i] == neg_inf) res[i] = neg_inf;
    }
    out.segment(r0, len) = res;
  });
  return out;
}

WeightedMoments weighted_moments(const Eigen::Ref<const MatX4>& points,
                                 const Eigen::Ref<const MatX>& resp) {
  if (resp.rows() != points.rows()) {
    throw NumericalError("weighted_moments: row count mismatch");
  }
  return detail::weighted_moments_fn(
      points, resp.cols(),
      [&](Eigen::Index b, Eigen::Index r0, Eigen::Index len, double* out) {
        Eigen::Map<VecX>(out, len) = resp.col(b).segment(r0, len);
      });
}

}  // namespace gmmscape
