#pragma once

#include <cstdint>

#include "gmmscape/gmm.hpp"
#include "gmmscape/point_cloud.hpp"

namespace gmmscape {

/// Mean-shift parameters. The bandwidth is interpreted in the min-max
/// normalized [0,1]^4 space of the input cloud.
struct GbmsParams {
  double bandwidth = 0.015;
  int max_iters = 100;
  double convergence_tol = 1e-5;  // mean seed displacement
  double merge_radius = -1.0;     // <= 0: bandwidth / 2

  void validate() const;
  double effective_merge_radius() const {
    return merge_radius > 0.0 ? merge_radius : bandwidth * 0.5;
  }
};

struct GbmsResult {
  int components = 0;
  MatX4 modes;     // components x 4, in the original (unnormalized) space
  int iterations = 0;
};

/// Estimates the component count: seeds one candidate per occupied
/// bandwidth-sized bin, blurs the seed set until it settles, then merges
/// converged seeds by single linkage.
GbmsResult gbms_estimate_components(const PointCloud4D& cloud,
                                    const GbmsParams& params);

struct EmParams {
  int max_iters = 100;
  double ll_rel_tol = 1e-5;
  double cov_reg = 1e-6;
  std::uint64_t seed = 0;
};

/// Log-domain responsibility matrix; every row logsumexps to 0.
struct Responsibilities {
  MatX log_gamma;  // N x M
};

/// Hard initial assignment: k-means++ style seeding (no Lloyd iterations)
/// followed by one nearest-center pass. Draws are keyed by the point
/// coordinates, so a permuted cloud selects the same centers.
/// Every component owns at least one point. Deterministic given seed.
Responsibilities kinit(const PointCloud4D& cloud, int k, std::uint64_t seed);

/// One E step: log responsibilities and the total data log-likelihood.
std::pair<Responsibilities, double> e_step(const PointCloud4D& cloud,
                                           const Gmm4& model,
                                           const CholeskyCache& cache);

/// One M step. Components whose responsibility mass falls below
/// kDegenerateCount are removed and the weights renormalized; the number
/// removed is reported through removed_out when non-null.
Gmm4 m_step(const PointCloud4D& cloud, const Responsibilities& resp,
            double cov_reg, int* removed_out = nullptr);

struct FitResult {
  Gmm4 model;
  int gbms_components = 0;      // K estimated by GBMS
  int em_iterations = 0;        // E steps executed
  double final_log_likelihood = 0.0;
  int removed_components = 0;
};

/// Full pipeline: GBMS -> KInit -> EM to convergence.
FitResult fit(const PointCloud4D& cloud, double bandwidth,
              const EmParams& em = {}, const GbmsParams* gbms = nullptr);

namespace detail {

// E step writing into a caller-owned buffer (first m columns used);
// returns the log-likelihood.
double e_step_into(const MatX4& points, const Gmm4& model,
                   const CholeskyCache& cache, Eigen::Ref<MatX> log_gamma);

// Min-max normalization of a cloud to [0,1]^4; zero-range dimensions map
// to 0. Returns per-dimension (min, range) for denormalization.
MatX4 normalize_cloud(const MatX4& points, Vec4& mins, Vec4& ranges);

}  // namespace detail
}  // namespace gmmscape
