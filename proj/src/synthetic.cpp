#include "gmmscape/synthetic.hpp"

#include <cmath>

#include "gmmscape/rng.hpp"

namespace gmmscape {

SyntheticFrame make_synthetic_frame(int width, int height,
                                    double depth_scale) {
  SyntheticFrame frame;
  frame.intrinsics.fx = 525.0 * width / 640.0;
  frame.intrinsics.fy = 525.0 * width / 640.0;
  frame.intrinsics.cx = width * 0.5 - 0.5;
  frame.intrinsics.cy = height * 0.5 - 0.5;
  frame.intrinsics.depth_scale = depth_scale;
  frame.intrinsics.width = width;
  frame.intrinsics.height = height;

  frame.depth.width = frame.intensity.width = width;
  frame.depth.height = frame.intensity.height = height;
  frame.depth.max_value = 65535;
  frame.intensity.max_value = 255;
  frame.depth.pixels.resize(static_cast<size_t>(width) * height);
  frame.intensity.pixels.resize(static_cast<size_t>(width) * height);

  const Vec3 sphere_center(0.35, -0.1, 2.1);
  const double sphere_r = 0.35;

  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      // Unit-depth ray through the pixel.
      const double rx = (u - frame.intrinsics.cx) / frame.intrinsics.fx;
      const double ry = (v - frame.intrinsics.cy) / frame.intrinsics.fy;
      const Vec3 dir(rx, ry, 1.0);

      // Back wall: z = 3.
      double z = 3.0;

      // Desk plane: y = 0.45 - 0.18 z (tilted toward the camera), only in
      // front of the wall and below the horizon.
      const double denom = ry + 0.18;
      if (denom > 1e-9) {
        const double zd = 0.45 / denom;
        if (zd > 0.4 && zd < z) z = zd;
      }

      // Sphere.
      const double a = dir.squaredNorm();
      const double bq = -2.0 * dir.dot(sphere_center);
      const double c = sphere_center.squaredNorm() - sphere_r * sphere_r;
      const double disc = bq * bq - 4.0 * a * c;
      if (disc > 0.0) {
        const double t = (-bq - std::sqrt(disc)) / (2.0 * a);
        if (t > 0.0 && t < z) z = t;  // dir.z() == 1, so t is the hit depth
      }

      const Vec3 p = dir * z;
      const double raw = depth_scale * z;
      frame.depth.at(u, v) =
          static_cast<std::uint16_t>(std::min(raw, 65535.0));

      // Striped texture over the hit point, softened by height.
      double inten = 0.55 + 0.25 * std::sin(7.0 * p.x()) * std::cos(5.0 * p.y()) +
                     0.15 * std::sin(3.0 * p.z());
      inten = std::clamp(inten, 0.0, 1.0);
      frame.intensity.at(u, v) = static_cast<std::uint16_t>(
          std::lround(inten * 255.0));
    }
  }
  return frame;
}

PointCloud4D make_blob_cloud(const MatX4& centers, double sigma,
                             Eigen::Index per_blob, std::uint64_t seed) {
  const Eigen::Index k = centers.rows();
  PointCloud4D cloud;
  cloud.points.resize(k * per_blob, 4);
  for (Eigen::Index b = 0; b < k; ++b) {
    for (Eigen::Index i = 0; i < per_blob; ++i) {
      const auto counter = static_cast<std::uint64_t>(b * per_blob + i) * 4;
      double z0, z1, z2, z3;
      rng::normal_pair(seed, 7, counter, z0, z1);
      rng::normal_pair(seed, 7, counter + 2, z2, z3);
      cloud.points.row(b * per_blob + i) =
          centers.row(b) + sigma * Eigen::RowVector4d(z0, z1, z2, z3);
    }
  }
  // Keep intensities inside [0, 1] so the cloud is a valid sensor cloud.
  cloud.points.col(3) = cloud.points.col(3).cwiseMax(0.0).cwiseMin(1.0);
  return cloud;
}

PointCloud4D make_structured_scene(Eigen::Index n, std::uint64_t seed,
                                   double noise_sigma) {
  PointCloud4D cloud;
  cloud.points.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ctr = static_cast<std::uint64_t>(i);
    const double u = rng::uniform(seed, 11, ctr * 8);
    const double v = rng::uniform(seed, 11, ctr * 8 + 1);
    double nz0, nz1, nz2, unused;
    rng::normal_pair(seed, 12, ctr * 8 + 2, nz0, nz1);
    rng::normal_pair(seed, 12, ctr * 8 + 4, nz2, unused);

    Vec3 p;
    switch (i % 3) {
      case 0:  // ground plane z = 0
        p = Vec3(2.0 * u - 1.0, 2.0 * v - 1.0, 0.0);
        break;
      case 1:  // wall plane x = 0
        p = Vec3(0.0, 2.0 * u - 1.0, 1.2 * v);
        break;
      default: {  // cylinder, axis along z
        const double ang = 2.0 * M_PI * u;
        p = Vec3(0.55 + 0.3 * std::cos(ang), -0.35 + 0.3 * std::sin(ang),
                 1.1 * v);
        break;
      }
    }
    p += noise_sigma * Vec3(nz0, nz1, nz2);
    const double inten = std::clamp(
        0.5 + 0.3 * std::sin(4.0 * p.x()) + 0.2 * std::cos(3.0 * p.y() + p.z()),
        0.0, 1.0);
    cloud.points.row(i) << p.x(), p.y(), p.z(), inten;
  }
  return cloud;
}

}  // namespace gmmscape
