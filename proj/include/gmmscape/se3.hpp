#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gmmscape/common.hpp"

namespace gmmscape {

/// Rigid-body transform: p' = R p + t. R is kept orthonormal with det +1.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform compose(const RigidTransform& rhs) const {
    // (*this) after rhs: p -> this(rhs(p))
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  /// Projects the rotation back onto SO(3) (nearest orthonormal matrix).
  void orthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(rotation,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Mat3 d = Mat3::Identity();
      d(2, 2) = -1.0;
      r = svd.matrixU() * d * svd.matrixV().transpose();
    }
    rotation = r;
  }

  bool is_valid(double tol = 1e-10) const {
    const double ortho =
        (rotation.transpose() * rotation - Mat3::Identity()).norm();
    return ortho <= tol * 10.0 && std::abs(rotation.determinant() - 1.0) <= tol * 10.0 &&
           translation.allFinite();
  }
};

namespace se3 {

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

inline Vec3 vee(const Mat3& s) {
  return Vec3(s(2, 1), s(0, 2), s(1, 0));
}

inline Mat3 exp_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 s = skew(w);
  double a, b;
  if (theta < 1e-6) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * s + b * (s * s);
}

inline Vec3 log_so3(const Mat3& r) {
  const double cos_theta =
      std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta < 1e-8) {
    return vee(r - r.transpose()) * 0.5;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the skew part vanishes; recover the axis from the symmetric
    // part via the largest diagonal entry.
    const Mat3 a = 0.5 * (r + Mat3::Identity());
    int k = 0;
    a.diagonal().maxCoeff(&k);
    Vec3 axis;
    axis[k] = std::sqrt(std::max(a(k, k), 0.0));
    for (int i = 0; i < 3; ++i) {
      if (i != k) axis[i] = a(k, i) / axis[k];
    }
    axis.normalize();
    // Fix the sign using the skew part when it is not fully degenerate.
    const Vec3 sk = vee(r - r.transpose());
    if (sk.dot(axis) < 0.0) axis = -axis;
    return axis * theta;
  }
  return vee(r - r.transpose()) * (theta / (2.0 * std::sin(theta)));
}

// Left Jacobian of SO(3); couples rotation and translation in the SE(3)
// exponential: t = V(w) v.
inline Mat3 left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 s = skew(w);
  double b, c;
  if (theta < 1e-6) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + b * s + c * (s * s);
}

inline Mat3 left_jacobian_inverse(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 s = skew(w);
  double c;
  if (theta < 1e-6) {
    c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    c = (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) /
        theta2;
  }
  return Mat3::Identity() - 0.5 * s + c * (s * s);
}

/// Exponential map. Tangent layout: xi = [omega; v].
inline RigidTransform exp(const Vec6& xi) {
  const Vec3 w = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  return {exp_so3(w), left_jacobian(w) * v};
}

/// Logarithm map, inverse of exp.
inline Vec6 log(const RigidTransform& t) {
  Vec6 xi;
  const Vec3 w = log_so3(t.rotation);
  xi.head<3>() = w;
  xi.tail<3>() = left_jacobian_inverse(w) * t.translation;
  return xi;
}

/// Rotation angle (radians) of the relative rotation between two transforms.
inline double rotation_angle(const Mat3& a, const Mat3& b) {
  return log_so3(a.transpose() * b).norm();
}

}  // namespace se3
}  // namespace gmmscape
