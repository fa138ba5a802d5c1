#pragma once

#include <cstdint>

#include "gmmscape/gmm.hpp"
#include "gmmscape/point_cloud.hpp"

namespace gmmscape {

/// Draws n points from the mixture: component by categorical weight, then
/// mean + L * z with standard normals z. Draw i depends only on (seed, i).
PointCloud4D joint_dist_sample(const Gmm4& model, Eigen::Index n,
                               std::uint64_t seed);

struct ConditionalResult {
  VecX expected_intensity;  // clamped to [0,1] unless clamp=false
  VecX variance;            // >= 0
};

/// Conditional intensity given 3D location. Per component the mean/variance
/// follow the Gaussian conditioning identities; components are gated by
/// their spatial marginal density at the query point. Locations where every
/// gate underflows fall back to the nearest component by spatial
/// Mahalanobis distance.
ConditionalResult color_conditional(const Gmm4& model,
                                    const Eigen::Ref<const MatX3>& locs,
                                    bool clamp = true);

/// Average log-likelihood of the cloud under the model.
double score(const Gmm4& model, const PointCloud4D& cloud);

}  // namespace gmmscape
