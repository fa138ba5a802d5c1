#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gmmscape/common.hpp"

namespace gmmscape {

/// Contiguous batch of 4x4 blocks (strided layout, 16 doubles per block).
class Batched4x4 {
 public:
  Batched4x4() = default;
  explicit Batched4x4(int count)
      : count_(count), data_(static_cast<size_t>(count) * 16, 0.0) {}

  int count() const { return count_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Eigen::Map<Mat4> block(int i) { return Eigen::Map<Mat4>(data_.data() + 16 * i); }
  Eigen::Map<const Mat4> block(int i) const {
    return Eigen::Map<const Mat4>(data_.data() + 16 * i);
  }

 private:
  int count_ = 0;
  std::vector<double> data_;
};

/// Batch of symmetric positive-definite 4x4 matrices.
using BatchedSpd4 = Batched4x4;
/// Batch of lower-triangular 4x4 factors (upper entries exactly zero).
using BatchedLower4 = Batched4x4;

/// Cholesky of one SPD 4x4 block; returns false if a pivot is not positive.
bool cholesky4(const Mat4& a, Mat4& lower);

/// Forward substitution L x = b for one lower-triangular block.
Vec4 tri_lower_solve4(const Mat4& lower, const Vec4& b);

/// Inverse of a lower-triangular 4x4 (also lower-triangular).
Mat4 lower_inverse4(const Mat4& lower);

/// Per-block Cholesky. Throws NumericalError naming the first failing block.
BatchedLower4 batched_cholesky(const BatchedSpd4& blocks);

/// Solves L_b x_b = rhs_b per block; rhs rows are the per-block 4-vectors.
/// Throws NumericalError on a zero diagonal entry.
MatX4 batched_tri_solve(const BatchedLower4& factors, const MatX4& rhs);

/// 4xk right-hand-side variant; rhs blocks are replaced by the solutions.
void batched_tri_solve(const BatchedLower4& factors, Batched4x4& rhs);

/// Row-wise log(sum(exp(.))) with the max-shift identity. Rows that are
/// entirely -inf yield -inf. Deterministic: columns are summed left to
/// right, rows are independent.
VecX logsumexp_rows(const Eigen::Ref<const MatX>& log_matrix);

inline constexpr double kDegenerateCount = 1e-10;

struct WeightedMoments {
  VecX counts;             // M
  MatX4 means;             // M x 4
  Batched4x4 scatters;     // M blocks, weighted covariance about the mean
  std::vector<int> degenerate;  // indices with count < kDegenerateCount
};

/// Weighted first and second moments per component. resp is N x M with
/// nonnegative entries; rows are expected to sum to 1. Summation is blocked
/// over fixed point ranges, so results do not depend on the thread count.
WeightedMoments weighted_moments(const Eigen::Ref<const MatX4>& points,
                                 const Eigen::Ref<const MatX>& resp);

namespace detail {

// Shared implementation. FillFn(b, r0, len, out) writes the linear-domain
// weights of component b for rows [r0, r0+len) into out. Two passes: counts
// and weighted sums, then scatter about the mean. Blocked summation over
// fixed point ranges keeps results independent of the thread count.
template <typename FillFn>
WeightedMoments weighted_moments_fn(const Eigen::Ref<const MatX4>& points,
                                    Eigen::Index m, FillFn&& fill) {
  const Eigen::Index n = points.rows();
  const std::int64_t nblocks = num_point_blocks(n);
  using Arr = Eigen::ArrayXd;
  using ConstSeg = Eigen::Map<const Arr>;

  std::vector<double> part1(static_cast<size_t>(nblocks) * m * 5, 0.0);
  parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * kPointBlock;
    const Eigen::Index len = std::min<Eigen::Index>(n, r0 + kPointBlock) - r0;
    Arr w(len);
    double* out = part1.data() + static_cast<size_t>(blk) * m * 5;
    const ConstSeg x0(points.col(0).data() + r0, len);
    const ConstSeg x1(points.col(1).data() + r0, len);
    const ConstSeg x2(points.col(2).data() + r0, len);
    const ConstSeg x3(points.col(3).data() + r0, len);
    for (Eigen::Index b = 0; b < m; ++b) {
      fill(b, r0, len, w.data());
      double* o = out + b * 5;
      o[0] = w.sum();
      o[1] = (w * x0).sum();
      o[2] = (w * x1).sum();
      o[3] = (w * x2).sum();
      o[4] = (w * x3).sum();
    }
  });

  WeightedMoments wm;
  wm.counts = VecX::Zero(m);
  wm.means = MatX4::Zero(m, 4);
  for (std::int64_t blk = 0; blk < nblocks; ++blk) {
    const double* in = part1.data() + static_cast<size_t>(blk) * m * 5;
    for (Eigen::Index b = 0; b < m; ++b) {
      wm.counts[b] += in[b * 5 + 0];
      for (int d = 0; d < 4; ++d) wm.means(b, d) += in[b * 5 + 1 + d];
    }
  }
  for (Eigen::Index b = 0; b < m; ++b) {
    if (wm.counts[b] < kDegenerateCount) {
      wm.degenerate.push_back(static_cast<int>(b));
      wm.means.row(b).setZero();
    } else {
      wm.means.row(b) /= wm.counts[b];
    }
  }

  std::vector<double> part2(static_cast<size_t>(nblocks) * m * 10, 0.0);
  parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * kPointBlock;
    const Eigen::Index len = std::min<Eigen::Index>(n, r0 + kPointBlock) - r0;
    Arr w(len), d0(len), d1(len), d2(len), d3(len);
    double* out = part2.data() + static_cast<size_t>(blk) * m * 10;
    const ConstSeg x0(points.col(0).data() + r0, len);
    const ConstSeg x1(points.col(1).data() + r0, len);
    const ConstSeg x2(points.col(2).data() + r0, len);
    const ConstSeg x3(points.col(3).data() + r0, len);
    for (Eigen::Index b = 0; b < m; ++b) {
      fill(b, r0, len, w.data());
      d0 = x0 - wm.means(b, 0);
      d1 = x1 - wm.means(b, 1);
      d2 = x2 - wm.means(b, 2);
      d3 = x3 - wm.means(b, 3);
      double* o = out + b * 10;
      o[0] = (w * d0 * d0).sum();
      o[1] = (w * d1 * d0).sum();
      o[2] = (w * d1 * d1).sum();
      o[3] = (w * d2 * d0).sum();
      o[4] = (w * d2 * d1).sum();
      o[5] = (w * d2 * d2).sum();
      o[6] = (w * d3 * d0).sum();
      o[7] = (w * d3 * d1).sum();
      o[8] = (w * d3 * d2).sum();
      o[9] = (w * d3 * d3).sum();
    }
  });

  wm.scatters = Batched4x4(static_cast<int>(m));
  std::vector<double> packed(static_cast<size_t>(m) * 10, 0.0);
  for (std::int64_t blk = 0; blk < nblocks; ++blk) {
    const double* in = part2.data() + static_cast<size_t>(blk) * m * 10;
    for (Eigen::Index b = 0; b < m; ++b) {
      for (int k = 0; k < 10; ++k) packed[b * 10 + k] += in[b * 10 + k];
    }
  }
  static constexpr int kRow[10] = {0, 1, 1, 2, 2, 2, 3, 3, 3, 3};
  static constexpr int kCol[10] = {0, 0, 1, 0, 1, 2, 0, 1, 2, 3};
  for (Eigen::Index b = 0; b < m; ++b) {
    auto blockb = wm.scatters.block(static_cast<int>(b));
    const double inv =
        wm.counts[b] >= kDegenerateCount ? 1.0 / wm.counts[b] : 0.0;
    for (int k = 0; k < 10; ++k) {
      const double v = packed[b * 10 + k] * inv;
      blockb(kRow[k], kCol[k]) = v;
      blockb(kCol[k], kRow[k]) = v;
    }
  }
  return wm;
}

}  // namespace detail
}  // namespace gmmscape
