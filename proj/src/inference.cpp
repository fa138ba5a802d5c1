#include "gmmscape/inference.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <vector>

#include "gmmscape/rng.hpp"

namespace gmmscape {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

PointCloud4D joint_dist_sample(const Gmm4& model, Eigen::Index n,
                               std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  model.validate();
  const int m = model.components();
  const CholeskyCache cache = cholesky_cache(model);

  VecX cdf(m);
  double acc = 0.0;
  for (int b = 0; b < m; ++b) {
    acc += model.weights[b];
    cdf[b] = acc;
  }
  cdf[m - 1] = 1.0;  // guard against rounding in the running sum

  // Note: draws are raw; intensities can leave [0,1] since Gaussian support
  // is unbounded. Consumers that need image-valued intensities clamp.
  PointCloud4D out;
  out.points.resize(n, 4);
  const std::int64_t nblocks = detail::num_point_blocks(n);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * detail::kPointBlock;
    const Eigen::Index r1 = std::min<Eigen::Index>(n, r0 + detail::kPointBlock);
    for (Eigen::Index i = r0; i < r1; ++i) {
      const double u = rng::uniform(seed, 0, static_cast<std::uint64_t>(i));
      int b = 0;
      while (b < m - 1 && u >= cdf[b]) ++b;
      Vec4 z;
      rng::normal_pair(seed, 1, static_cast<std::uint64_t>(i) * 4, z[0], z[1]);
      rng::normal_pair(seed, 1, static_cast<std::uint64_t>(i) * 4 + 2, z[2],
                       z[3]);
      out.points.row(i) =
          (model.means.row(b).transpose() + cache.lower.block(b) * z)
              .transpose();
    }
  });
  return out;
}

ConditionalResult color_conditional(const Gmm4& model,
                                    const Eigen::Ref<const MatX3>& locs,
                                    bool clamp) {
  model.validate();
  const int m = model.components();
  const Eigen::Index n = locs.rows();

  // Per-component spatial/intensity partition of the 4D Gaussian.
  std::vector<Mat3> xx_inv(m);
  std::vector<Vec3> mu_x(m), regression(m);
  VecX mu_i(m), cond_var(m), gate_base(m);
  for (int b = 0; b < m; ++b) {
    const Mat4 cov = model.covariance(b);
    const Mat3 sxx = cov.topLeftCorner<3, 3>();
    const Vec3 sxi = cov.topRightCorner<3, 1>();
    Eigen::LLT<Mat3> llt(sxx);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("spatial covariance of component " +
                           std::to_string(b) + " is not positive definite");
    }
    xx_inv[b] = llt.solve(Mat3::Identity());
    mu_x[b] = model.means.row(b).head<3>().transpose();
    mu_i[b] = model.means(b, 3);
    regression[b] = llt.solve(sxi);
    cond_var[b] = cov(3, 3) - sxi.dot(regression[b]);
    const double log_det = 2.0 * Mat3(llt.matrixL())
                                     .diagonal()
                                     .array()
                                     .log()
                                     .sum();
    gate_base[b] =
        std::log(model.weights[b]) - 0.5 * (3.0 * kLog2Pi + log_det);
  }

  ConditionalResult result;
  result.expected_intensity.resize(n);
  result.variance.resize(n);

  const std::int64_t nblocks = detail::num_point_blocks(n);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * detail::kPointBlock;
    const Eigen::Index r1 = std::min<Eigen::Index>(n, r0 + detail::kPointBlock);
    VecX log_gate(m), cond_mean(m), maha(m);
    for (Eigen::Index i = r0; i < r1; ++i) {
      const Vec3 x = locs.row(i).transpose();
      double mx = kNegInf;
      for (int b = 0; b < m; ++b) {
        const Vec3 d = x - mu_x[b];
        const double q = d.dot(xx_inv[b] * d);
        maha[b] = q;
        log_gate[b] = gate_base[b] - 0.5 * q;
        cond_mean[b] = mu_i[b] + regression[b].dot(d);
        if (log_gate[b] > mx) mx = log_gate[b];
      }
      double e = 0.0, second = 0.0;
      if (mx == kNegInf || !std::isfinite(mx)) {
        // Every gate underflowed: nearest component by Mahalanobis distance.
        int b = 0;
        maha.minCoeff(&b);
        e = cond_mean[b];
        second = cond_var[b] + e * e;
      } else {
        double norm = 0.0;
        for (int b = 0; b < m; ++b) {
          const double w = std::exp(log_gate[b] - mx);
          norm += w;
          e += w * cond_mean[b];
          second += w * (cond_var[b] + cond_mean[b] * cond_mean[b]);
        }
        e /= norm;
        second /= norm;
      }
      double v = second - e * e;
      if (v < -1e-12) {
        throw NumericalError("conditional variance " + std::to_string(v) +
                             " below tolerance");
      }
      if (v < 0.0) v = 0.0;
      result.variance[i] = v;
      result.expected_intensity[i] = clamp ? std::clamp(e, 0.0, 1.0) : e;
    }
  });
  return result;
}

double score(const Gmm4& model, const PointCloud4D& cloud) {
  model.validate();
  if (cloud.size() < 1) throw std::invalid_argument("empty cloud");
  const CholeskyCache cache = cholesky_cache(model);
  const int m = model.components();
  const Eigen::Index n = cloud.size();

  VecX base(m);
  for (int b = 0; b < m; ++b) {
    base[b] = std::log(model.weights[b]) + cache.log_det_terms[b] -
              2.0 * kLog2Pi;
  }

  const std::int64_t nblocks = detail::num_point_blocks(n);
  std::vector<double> partials(static_cast<size_t>(nblocks), 0.0);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * detail::kPointBlock;
    const Eigen::Index len = std::min<Eigen::Index>(n, r0 + detail::kPointBlock) - r0;
    MatX block(len, m);
    for (int b = 0; b < m; ++b) {
      const Vec4 mu = model.means.row(b).transpose();
      const Mat4 p = cache.precision.block(b);
      MatX4 y = (cloud.points.middleRows(r0, len).rowwise() - mu.transpose()) *
                p.transpose();
      block.col(b) = (-0.5 * y.rowwise().squaredNorm()).array() + base[b];
    }
    partials[static_cast<size_t>(blk)] = logsumexp_rows(block).sum();
  });
  double total = 0.0;
  for (const double p : partials) total += p;
  return total / static_cast<double>(n);
}

}  // namespace gmmscape
