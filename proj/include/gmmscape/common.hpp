#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace gmmscape {

using MatX4 = Eigen::Matrix<double, Eigen::Dynamic, 4>;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// I/O failures (missing files, bad headers, truncated payloads).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failures (non-SPD matrices, degenerate systems, diverged solves).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Global worker-count knob. Defaults to hardware concurrency; every
/// data-parallel loop in the library reads it at call time.
void set_num_threads(int n);
int num_threads();

namespace detail {

// Runs fn(block_index) for blocks [0, num_blocks) across the configured
// worker count. Blocks are assigned statically so a given block always
// processes the same index range; results must be written to disjoint
// storage by the callee.
void parallel_for_blocks(std::int64_t num_blocks,
                         const std::function<void(std::int64_t)>& fn);

// Fixed block length used to chunk point-indexed loops. Independent of the
// worker count so reductions sum the same partials in the same order no
// matter how many threads run.
inline constexpr std::int64_t kPointBlock = 4096;

inline std::int64_t num_point_blocks(std::int64_t n) {
  return (n + kPointBlock - 1) / kPointBlock;
}

}  // namespace detail
}  // namespace gmmscape
