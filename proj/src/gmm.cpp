#include "gmmscape/gmm.hpp"

#include <cmath>
#include <string>

namespace gmmscape {

void Gmm4::validate() const {
  const int m = components();
  if (m < 1) throw NumericalError("model has no components");
  if (means.rows() != m || covariances.rows() != m) {
    throw NumericalError("model field sizes disagree");
  }
  if (!weights.allFinite() || !means.allFinite() || !covariances.allFinite()) {
    throw NumericalError("model contains non-finite values");
  }
  if (weights.minCoeff() <= 0.0) {
    throw NumericalError("model weights must be positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw NumericalError("model weights sum to " +
                         std::to_string(weights.sum()));
  }
  for (int b = 0; b < m; ++b) {
    Mat4 lower;
    if (!cholesky4(covariance(b), lower)) {
      throw NumericalError("covariance of component " + std::to_string(b) +
                           " is not positive definite");
    }
  }
}

CholeskyCache cholesky_cache(const Gmm4& model) {
  const int m = model.components();
  BatchedSpd4 covs(m);
  for (int b = 0; b < m; ++b) covs.block(b) = model.covariance(b);

  CholeskyCache cache;
  cache.lower = batched_cholesky(covs);
  cache.precision = BatchedLower4(m);
  cache.log_det_terms = VecX(m);
  for (int b = 0; b < m; ++b) {
    const Mat4 p = lower_inverse4(cache.lower.block(b));
    cache.precision.block(b) = p;
    cache.log_det_terms[b] = p.diagonal().array().log().sum();
  }
  return cache;
}

}  // namespace gmmscape
