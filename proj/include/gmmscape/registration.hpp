#pragma once

#include "gmmscape/gmm.hpp"
#include "gmmscape/se3.hpp"

namespace gmmscape {

struct RegistrationResult {
  RigidTransform transform;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct RegistrationOptions {
  double grad_tol = 1e-8;
  int max_iters = 200;
  // Isoplanar flattening: the smallest eigenvalue of each spatial covariance
  // is replaced by this fraction of the mixture's largest eigenvalue.
  double planar_eig_fraction = 1e-4;
};

/// Negated L2 inner product between the transformed source mixture and the
/// target mixture (spatial 3D marginals; constant self terms dropped):
///   -sum_ab pi_a pi_b N(R mu_a + t | mu_b, R Sigma_a R^T + Sigma_b)
double l2_cost(const Gmm4& source, const Gmm4& target,
               const RigidTransform& transform);

/// Gradient of l2_cost with respect to a left-multiplied SE(3) tangent
/// [omega; v] at zero. Optionally returns the cost.
Vec6 l2_cost_gradient(const Gmm4& source, const Gmm4& target,
                      const RigidTransform& transform,
                      double* cost_out = nullptr);

/// Local minimization of l2_cost from the initial guess: damped second-order
/// steps on the tangent space with exponential-map retraction.
RegistrationResult anisotropic_registration(const RigidTransform& init,
                                            const Gmm4& source,
                                            const Gmm4& target,
                                            const RegistrationOptions& opts = {});

/// Same optimization after flattening both mixtures' spatial covariances to
/// planar discs (smallest eigenvalue pinned).
RegistrationResult isoplanar_registration(const RigidTransform& init,
                                          const Gmm4& source,
                                          const Gmm4& target,
                                          const RegistrationOptions& opts = {});

/// Coarse isoplanar stage, then anisotropic refinement from its output.
RegistrationResult isoplanar_hybrid_registration(
    const RigidTransform& init, const Gmm4& source, const Gmm4& target,
    const RegistrationOptions& opts = {});

}  // namespace gmmscape
