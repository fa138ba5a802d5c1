#include "gmmscape/ingest.hpp"

#include <stdexcept>

namespace gmmscape {

void CameraIntrinsics::validate() const {
  if (fx <= 0.0 || fy <= 0.0 || depth_scale <= 0.0) {
    throw std::invalid_argument("intrinsics: fx, fy, depth_scale must be > 0");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::invalid_argument("intrinsics: principal point outside image");
  }
}

CameraIntrinsics CameraIntrinsics::decimated(int factor) const {
  CameraIntrinsics d = *this;
  d.fx = fx / factor;
  d.fy = fy / factor;
  d.cx = cx / factor;
  d.cy = cy / factor;
  d.width = width / factor;
  d.height = height / factor;
  return d;
}

PointCloud4D image_pair_to_cloud(const Image& depth, const Image& intensity,
                                 const CameraIntrinsics& intr) {
  intr.validate();
  if (depth.width != intensity.width || depth.height != intensity.height) {
    throw std::invalid_argument("depth and intensity dimensions differ");
  }
  Eigen::Index n = 0;
  for (const auto d : depth.pixels) {
    if (d > 0) ++n;
  }
  if (n == 0) throw NumericalError("all depth pixels are zero: empty cloud");

  PointCloud4D cloud;
  cloud.points.resize(n, 4);
  const double inv_scale = 1.0 / intr.depth_scale;
  const double inv_max = 1.0 / intensity.max_value;
  Eigen::Index k = 0;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::uint16_t d = depth.at(u, v);
      if (d == 0) continue;
      const double z = d * inv_scale;
      cloud.points(k, 0) = (u - intr.cx) * z / intr.fx;
      cloud.points(k, 1) = (v - intr.cy) * z / intr.fy;
      cloud.points(k, 2) = z;
      cloud.points(k, 3) = intensity.at(u, v) * inv_max;
      ++k;
    }
  }
  return cloud;
}

Image decimate(const Image& img, int factor) {
  if (factor < 1) throw std::invalid_argument("decimation factor must be >= 1");
  if (factor > img.width || factor > img.height) {
    throw std::invalid_argument("decimation factor exceeds image dimensions");
  }
  if (factor == 1) return img;
  Image out;
  out.width = img.width / factor;
  out.height = img.height / factor;
  out.max_value = img.max_value;
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) {
      out.at(u, v) = img.at(u * factor, v * factor);
    }
  }
  return out;
}

PointCloud4D transform_cloud(const PointCloud4D& cloud,
                             const RigidTransform& pose) {
  PointCloud4D out = cloud;
  out.points.leftCols<3>() =
      (cloud.points.leftCols<3>() * pose.rotation.transpose()).rowwise() +
      pose.translation.transpose();
  return out;
}

Vec3 project_point(const CameraIntrinsics& intr, const Vec3& p) {
  const double u = intr.fx * p.x() / p.z() + intr.cx;
  const double v = intr.fy * p.y() / p.z() + intr.cy;
  return Vec3(u, v, p.z() * intr.depth_scale);
}

}  // namespace gmmscape
