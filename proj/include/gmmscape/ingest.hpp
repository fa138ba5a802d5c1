#pragma once

#include "gmmscape/image.hpp"
#include "gmmscape/point_cloud.hpp"
#include "gmmscape/se3.hpp"

namespace gmmscape {

/// Pinhole camera model. depth_scale is depth units per meter (1000 for
/// millimeter depth images).
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double depth_scale = 1000.0;
  int width = 0;
  int height = 0;

  void validate() const;

  /// Intrinsics of the strided-subsampled image.
  CameraIntrinsics decimated(int factor) const;
};

/// Back-projects a depth/intensity pair into a 4D cloud. Pixels with zero
/// depth are dropped; output order is row-major over the image.
/// Throws std::invalid_argument on dimension mismatch and NumericalError
/// when every depth is zero.
PointCloud4D image_pair_to_cloud(const Image& depth, const Image& intensity,
                                 const CameraIntrinsics& intr);

/// Strided subsampling: output (u, v) = input(u * factor, v * factor).
Image decimate(const Image& img, int factor);

/// Applies p' = R p + t to the spatial columns; intensity untouched.
PointCloud4D transform_cloud(const PointCloud4D& cloud,
                             const RigidTransform& pose);

/// Pinhole projection of a 3D point: returns (u, v) pixel coordinates and
/// the depth value in depth units.
Vec3 project_point(const CameraIntrinsics& intr, const Vec3& p);

}  // namespace gmmscape
