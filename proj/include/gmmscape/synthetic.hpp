#pragma once

#include <cstdint>

#include "gmmscape/image.hpp"
#include "gmmscape/ingest.hpp"
#include "gmmscape/point_cloud.hpp"

namespace gmmscape {

struct SyntheticFrame {
  Image depth;      // 16-bit, depth_scale units per meter
  Image intensity;  // 8-bit
  CameraIntrinsics intrinsics;
};

/// Procedural depth/intensity pair: a back wall, a tilted desk plane, and a
/// sphere, with a striped intensity texture. Deterministic.
SyntheticFrame make_synthetic_frame(int width, int height,
                                    double depth_scale = 1000.0);

/// Gaussian blobs of equal size around the given 4D centers.
PointCloud4D make_blob_cloud(const MatX4& centers, double sigma,
                             Eigen::Index per_blob, std::uint64_t seed);

/// Structured surface scene (two intersecting planes and a cylinder) with
/// smooth intensity and small surface noise; extent roughly [-1, 1] m.
PointCloud4D make_structured_scene(Eigen::Index n, std::uint64_t seed,
                                   double noise_sigma = 0.005);

}  // namespace gmmscape
