#include "gmmscape/registration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <vector>

namespace gmmscape {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Spatial (3D) marginal of a 4D mixture.
struct Marginal3 {
  VecX log_w;
  std::vector<Vec3> mu;
  std::vector<Mat3> cov;
};

Marginal3 spatial_marginal(const Gmm4& model) {
  model.validate();
  const int m = model.components();
  Marginal3 out;
  out.log_w = model.weights.array().log();
  out.mu.resize(m);
  out.cov.resize(m);
  for (int b = 0; b < m; ++b) {
    out.mu[b] = model.means.row(b).head<3>().transpose();
    out.cov[b] = model.covariance(b).topLeftCorner<3, 3>();
  }
  return out;
}

// Pins the smallest eigenvalue of every covariance to a fraction of the
// mixture's largest eigenvalue (planar prior).
void flatten_isoplanar(Marginal3& marg, double fraction) {
  double max_eig = 0.0;
  std::vector<Eigen::SelfAdjointEigenSolver<Mat3>> eigs(marg.cov.size());
  for (size_t b = 0; b < marg.cov.size(); ++b) {
    eigs[b].compute(marg.cov[b]);
    max_eig = std::max(max_eig, eigs[b].eigenvalues().maxCoeff());
  }
  const double eps_planar = fraction * max_eig;
  for (size_t b = 0; b < marg.cov.size(); ++b) {
    Vec3 vals = eigs[b].eigenvalues();  // ascending
    vals[0] = eps_planar;
    marg.cov[b] = eigs[b].eigenvectors() * vals.asDiagonal() *
                  eigs[b].eigenvectors().transpose();
  }
}

struct CostEval {
  double log_inner = kNegInf;  // ln sum_ab w_a w_b phi_ab
  double cost = 0.0;           // -exp(log_inner)
  Vec6 grad_log = Vec6::Zero();  // gradient of log_inner
  Vec6 grad_cost = Vec6::Zero();
  Mat6 curvature = Mat6::Zero();  // sum_ab alpha (dlnphi)(dlnphi)^T
};

// Evaluates the pairwise log terms and, optionally, gradient and curvature.
CostEval evaluate(const Marginal3& src, const Marginal3& tgt,
                  const RigidTransform& t, bool with_grad) {
  const int ms = static_cast<int>(src.mu.size());
  const int mt = static_cast<int>(tgt.mu.size());
  const std::int64_t pairs = static_cast<std::int64_t>(ms) * mt;
  const Mat3& r = t.rotation;

  std::vector<Vec3> y(ms);
  std::vector<Mat3> a(ms);
  for (int i = 0; i < ms; ++i) {
    y[i] = r * src.mu[i] + t.translation;
    a[i] = r * src.cov[i] * r.transpose();
  }

  std::vector<double> log_terms(static_cast<size_t>(pairs));
  std::vector<Vec6> dlnphi;
  if (with_grad) dlnphi.resize(static_cast<size_t>(pairs));

  const std::int64_t nblocks = detail::num_point_blocks(pairs);
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const std::int64_t p0 = blk * detail::kPointBlock;
    const std::int64_t p1 = std::min(pairs, p0 + detail::kPointBlock);
    for (std::int64_t p = p0; p < p1; ++p) {
      const int i = static_cast<int>(p / mt);
      const int j = static_cast<int>(p % mt);
      const Mat3 c = a[i] + tgt.cov[j];
      const Eigen::LLT<Mat3> llt(c);
      if (llt.info() != Eigen::Success) {
        log_terms[p] = kNegInf;
        if (with_grad) dlnphi[p].setZero();
        continue;
      }
      const Vec3 d = y[i] - tgt.mu[j];
      const Vec3 g = llt.solve(d);
      const double log_det =
          2.0 * Mat3(llt.matrixL()).diagonal().array().log().sum();
      log_terms[p] = src.log_w[i] + tgt.log_w[j] -
                     0.5 * (3.0 * kLog2Pi + log_det + d.dot(g));
      if (with_grad) {
        const Mat3 cinv = llt.solve(Mat3::Identity());
        const Mat3 bmat = a[i] * cinv - cinv * a[i];
        const Vec3 vee(0.5 * (bmat(2, 1) - bmat(1, 2)),
                       0.5 * (bmat(0, 2) - bmat(2, 0)),
                       0.5 * (bmat(1, 0) - bmat(0, 1)));
        Vec6 dl;
        dl.head<3>() = vee - y[i].cross(g) + (a[i] * g).cross(g);
        dl.tail<3>() = -g;
        dlnphi[p] = dl;
      }
    }
  });

  CostEval eval;
  double mx = kNegInf;
  for (std::int64_t p = 0; p < pairs; ++p) mx = std::max(mx, log_terms[p]);
  if (mx == kNegInf) {
    throw NumericalError("registration cost underflowed to zero everywhere");
  }
  double acc = 0.0;
  for (std::int64_t p = 0; p < pairs; ++p) {
    const double shifted = log_terms[p] - mx;
    if (shifted > -700.0) acc += std::exp(shifted);
  }
  eval.log_inner = mx + std::log(acc);
  eval.cost = -std::exp(eval.log_inner);
  if (!std::isfinite(eval.cost)) {
    throw NumericalError("registration cost is not finite");
  }

  if (with_grad) {
    const double inv_acc = 1.0 / acc;
    for (std::int64_t p = 0; p < pairs; ++p) {
      const double shifted = log_terms[p] - mx;
      if (shifted <= -700.0) continue;
      const double alpha = std::exp(shifted) * inv_acc;
      eval.grad_log += alpha * dlnphi[p];
      eval.curvature += alpha * (dlnphi[p] * dlnphi[p].transpose());
    }
    eval.grad_cost = eval.cost * eval.grad_log;
  }
  return eval;
}

RegistrationResult optimize(const Marginal3& src, const Marginal3& tgt,
                            const RigidTransform& init,
                            const RegistrationOptions& opts) {
  RegistrationResult result;
  RigidTransform t = init;
  t.orthonormalize();

  double lambda = 1e-4;
  CostEval cur = evaluate(src, tgt, t, true);
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    if (cur.grad_cost.norm() < opts.grad_tol) {
      result.converged = true;
      break;
    }
    // Damped second-order step on -log of the inner product; the curvature
    // proxy is the alpha-weighted outer-product matrix, which is PSD.
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Mat6 h = cur.curvature;
      h.diagonal().array() += lambda;
      const Vec6 delta = h.ldlt().solve(cur.grad_log);
      if (!delta.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      RigidTransform cand = se3::exp(delta).compose(t);
      cand.orthonormalize();
      CostEval next = evaluate(src, tgt, cand, true);
      if (next.log_inner > cur.log_inner) {
        t = cand;
        cur = next;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e14 || delta.norm() < 1e-14) break;
    }
    if (!accepted) {
      result.converged = cur.grad_cost.norm() < opts.grad_tol * 100.0;
      break;
    }
  }
  if (iter == opts.max_iters) {
    result.converged = cur.grad_cost.norm() < opts.grad_tol;
  }
  result.transform = t;
  result.final_cost = cur.cost;
  result.iterations = iter;
  return result;
}

}  // namespace

double l2_cost(const Gmm4& source, const Gmm4& target,
               const RigidTransform& transform) {
  return evaluate(spatial_marginal(source), spatial_marginal(target),
                  transform, false)
      .cost;
}

Vec6 l2_cost_gradient(const Gmm4& source, const Gmm4& target,
                      const RigidTransform& transform, double* cost_out) {
  const CostEval eval = evaluate(spatial_marginal(source),
                                 spatial_marginal(target), transform, true);
  if (cost_out) *cost_out = eval.cost;
  return eval.grad_cost;
}

RegistrationResult anisotropic_registration(const RigidTransform& init,
                                            const Gmm4& source,
                                            const Gmm4& target,
                                            const RegistrationOptions& opts) {
  return optimize(spatial_marginal(source), spatial_marginal(target), init,
                  opts);
}

RegistrationResult isoplanar_registration(const RigidTransform& init,
                                          const Gmm4& source,
                                          const Gmm4& target,
                                          const RegistrationOptions& opts) {
  Marginal3 src = spatial_marginal(source);
  Marginal3 tgt = spatial_marginal(target);
  flatten_isoplanar(src, opts.planar_eig_fraction);
  flatten_isoplanar(tgt, opts.planar_eig_fraction);
  return optimize(src, tgt, init, opts);
}

RegistrationResult isoplanar_hybrid_registration(const RigidTransform& init,
                                                 const Gmm4& source,
                                                 const Gmm4& target,
                                                 const RegistrationOptions& opts) {
  const RegistrationResult coarse =
      isoplanar_registration(init, source, target, opts);
  return anisotropic_registration(coarse.transform, source, target, opts);
}

}  // namespace gmmscape
