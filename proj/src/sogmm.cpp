#include "gmmscape/sogmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gmmscape/kdtree.hpp"
#include "gmmscape/rng.hpp"

namespace gmmscape {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}  // namespace

void GbmsParams::validate() const {
  if (!(bandwidth > 0.0) || bandwidth > 1.0) {
    throw std::invalid_argument("bandwidth must be in (0, 1]");
  }
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(convergence_tol > 0.0)) {
    throw std::invalid_argument("convergence_tol must be > 0");
  }
}

namespace detail {

MatX4 normalize_cloud(const MatX4& points, Vec4& mins, Vec4& ranges) {
  mins = points.colwise().minCoeff().transpose();
  const Vec4 maxs = points.colwise().maxCoeff().transpose();
  ranges = maxs - mins;
  MatX4 out(points.rows(), 4);
  for (int d = 0; d < 4; ++d) {
    if (ranges[d] > 0.0) {
      out.col(d) = (points.col(d).array() - mins[d]) / ranges[d];
    } else {
      out.col(d).setZero();
    }
  }
  return out;
}

}  // namespace detail

GbmsResult gbms_estimate_components(const PointCloud4D& cloud,
                                    const GbmsParams& params) {
  cloud.validate();
  params.validate();
  const double bw = params.bandwidth;

  Vec4 mins, ranges;
  const MatX4 norm = detail::normalize_cloud(cloud.points, mins, ranges);
  const Eigen::Index n = norm.rows();

  // Binned seeding: one seed per occupied bandwidth-sized bin, placed at the
  // centroid of the bin's points. Keys are sorted for a stable seed order.
  std::map<std::uint64_t, std::pair<Vec4, int>> bins;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t key = 0;
    for (int d = 0; d < 4; ++d) {
      const auto cell = static_cast<std::uint64_t>(norm(i, d) / bw);
      key = (key << 16) | (cell & 0xffff);
    }
    auto [it, inserted] = bins.try_emplace(key, Vec4::Zero(), 0);
    it->second.first += norm.row(i).transpose();
    it->second.second += 1;
  }
  MatX4 seeds(static_cast<Eigen::Index>(bins.size()), 4);
  {
    Eigen::Index s = 0;
    for (const auto& [key, acc] : bins) {
      seeds.row(s++) = (acc.first / acc.second).transpose();
    }
  }

  // Blurring iterations: every seed moves to the mean of the seeds within
  // the bandwidth radius (flat kernel), until the set stops moving. Seeds
  // that have collapsed onto each other are folded into one weighted
  // representative; the weighted mean keeps the update identical to the
  // mean over the original seed set.
  VecX weights = VecX::Ones(seeds.rows());
  const double total_weight = weights.sum();
  const double fold_eps = std::max(1e-12, params.convergence_tol * 1e-3);
  int iterations = 0;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    ++iterations;
    const Eigen::Index s_count = seeds.rows();
    MatX4 next(s_count, 4);
    KdTree4 tree(seeds);
    const std::int64_t nblocks = detail::num_point_blocks(s_count);
    detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
      const Eigen::Index r0 = blk * detail::kPointBlock;
      const Eigen::Index r1 =
          std::min<Eigen::Index>(s_count, r0 + detail::kPointBlock);
      for (Eigen::Index s = r0; s < r1; ++s) {
        Vec4 sum = Vec4::Zero();
        double mass = 0.0;
        tree.for_each_in_radius(seeds.row(s).transpose(), bw, [&](int j) {
          sum += weights[j] * seeds.row(j).transpose();
          mass += weights[j];
        });
        next.row(s) = (sum / mass).transpose();
      }
    });
    const double shift = (weights.array() *
                          (next - seeds).rowwise().norm().array())
                             .sum() /
                         total_weight;
    seeds.swap(next);

    // Fold coincident seeds (within fold_eps) into weighted representatives.
    std::vector<std::uint64_t> keys(static_cast<size_t>(seeds.rows()));
    std::map<std::uint64_t, std::pair<Eigen::Index, double>> fold;
    std::vector<Eigen::Index> keep_rows;
    for (Eigen::Index s = 0; s < seeds.rows(); ++s) {
      std::uint64_t key = 0;
      for (int d = 0; d < 4; ++d) {
        const auto cell =
            static_cast<std::uint64_t>((seeds(s, d) + 1.0) / fold_eps);
        key = rng::mix64(key ^ cell);
      }
      keys[static_cast<size_t>(s)] = key;
      auto [it, inserted] = fold.try_emplace(key, s, 0.0);
      if (inserted) keep_rows.push_back(s);
      it->second.second += weights[s];
    }
    if (static_cast<Eigen::Index>(keep_rows.size()) < seeds.rows()) {
      MatX4 folded(static_cast<Eigen::Index>(keep_rows.size()), 4);
      VecX fw(static_cast<Eigen::Index>(keep_rows.size()));
      Eigen::Index out = 0;
      for (const Eigen::Index s : keep_rows) {
        folded.row(out) = seeds.row(s);
        fw[out] = fold.at(keys[static_cast<size_t>(s)]).second;
        ++out;
      }
      seeds = std::move(folded);
      weights = std::move(fw);
    }
    if (shift < params.convergence_tol) break;
  }

  // Single-linkage merge of the converged seeds (weighted by the number of
  // original seeds each representative absorbed).
  const double merge_r = params.effective_merge_radius();
  const Eigen::Index s_count = seeds.rows();
  std::vector<int> parent(static_cast<size_t>(s_count));
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  KdTree4 tree(seeds);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    tree.for_each_in_radius(seeds.row(s).transpose(), merge_r, [&](int j) {
      const int ra = find(static_cast<int>(s));
      const int rb = find(j);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    });
  }
  std::vector<int> root_to_mode(static_cast<size_t>(s_count), -1);
  std::vector<Vec4> sums;
  std::vector<double> masses;
  for (Eigen::Index s = 0; s < s_count; ++s) {
    const int r = find(static_cast<int>(s));
    if (root_to_mode[r] < 0) {
      root_to_mode[r] = static_cast<int>(sums.size());
      sums.push_back(Vec4::Zero());
      masses.push_back(0.0);
    }
    sums[root_to_mode[r]] += weights[s] * seeds.row(s).transpose();
    masses[root_to_mode[r]] += weights[s];
  }

  GbmsResult result;
  result.components = static_cast<int>(sums.size());
  result.iterations = iterations;
  result.modes.resize(result.components, 4);
  for (int m = 0; m < result.components; ++m) {
    const Vec4 y = sums[m] / masses[m];
    for (int d = 0; d < 4; ++d) {
      result.modes(m, d) = ranges[d] > 0.0 ? y[d] * ranges[d] + mins[d]
                                           : mins[d];
    }
  }
  return result;
}

Responsibilities kinit(const PointCloud4D& cloud, int k, std::uint64_t seed) {
  cloud.validate();
  const Eigen::Index n = cloud.size();
  if (k < 1 || k > n) {
    throw std::invalid_argument("kinit: k must satisfy 1 <= k <= N");
  }
  const MatX4& pts = cloud.points;
  const std::int64_t nblocks = detail::num_point_blocks(n);

  // Coordinate-keyed counters make every draw a function of the point's
  // value, not its position in the array: a permuted cloud picks the same
  // centers. Each round samples proportionally to d^2 through competing
  // exponential clocks, argmin_i (-ln u_i) / d2_i.
  std::vector<std::uint64_t> keys(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    keys[i] = rng::hash_coords(pts.row(i).data(), 4);
  }

  std::vector<Eigen::Index> centers;
  centers.reserve(static_cast<size_t>(k));
  std::vector<char> chosen(static_cast<size_t>(n), 0);
  Eigen::ArrayXd d2 =
      Eigen::ArrayXd::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::ArrayXd neg_log_u(n);
  std::vector<Eigen::Index> block_arg(static_cast<size_t>(nblocks));
  std::vector<double> block_min(static_cast<size_t>(nblocks));

  for (int r = 0; r < k; ++r) {
    detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
      const Eigen::Index r0 = blk * detail::kPointBlock;
      const Eigen::Index len =
          std::min<Eigen::Index>(n, r0 + detail::kPointBlock) - r0;
      if (r > 0) {
        // Fold the latest center into the nearest-center distances.
        const Vec4 c = pts.row(centers.back()).transpose();
        const auto e0 = pts.col(0).segment(r0, len).array() - c[0];
        const auto e1 = pts.col(1).segment(r0, len).array() - c[1];
        const auto e2 = pts.col(2).segment(r0, len).array() - c[2];
        const auto e3 = pts.col(3).segment(r0, len).array() - c[3];
        d2.segment(r0, len) = d2.segment(r0, len).min(
            e0.square() + e1.square() + e2.square() + e3.square());
      }
      for (Eigen::Index i = r0; i < r0 + len; ++i) {
        neg_log_u[i] = -std::log(
            rng::uniform_pos(seed, static_cast<std::uint64_t>(r), keys[i]));
      }
      Eigen::Index arg = -1;
      double best = std::numeric_limits<double>::infinity();
      if (r == 0) {
        for (Eigen::Index i = r0; i < r0 + len; ++i) {
          if (neg_log_u[i] < best) {
            best = neg_log_u[i];
            arg = i;
          }
        }
      } else {
        for (Eigen::Index i = r0; i < r0 + len; ++i) {
          if (d2[i] > 0.0) {
            const double clock = neg_log_u[i] / d2[i];
            if (clock < best) {
              best = clock;
              arg = i;
            }
          }
        }
      }
      block_arg[static_cast<size_t>(blk)] = arg;
      block_min[static_cast<size_t>(blk)] = best;
    });

    Eigen::Index best = -1;
    double best_clock = std::numeric_limits<double>::infinity();
    for (std::int64_t blk = 0; blk < nblocks; ++blk) {
      if (block_arg[static_cast<size_t>(blk)] >= 0 &&
          block_min[static_cast<size_t>(blk)] < best_clock) {
        best_clock = block_min[static_cast<size_t>(blk)];
        best = block_arg[static_cast<size_t>(blk)];
      }
    }
    if (best < 0) {
      // Fewer distinct points than k: fall back to the lowest unchosen index.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[i]) {
          best = i;
          break;
        }
      }
    }
    chosen[best] = 1;
    centers.push_back(best);
  }

  // One hard nearest-center pass; ties go to the lower center index.
  MatX4 center_pts(k, 4);
  for (int b = 0; b < k; ++b) center_pts.row(b) = pts.row(centers[b]);
  std::vector<int> assign(static_cast<size_t>(n));
  detail::parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * detail::kPointBlock;
    const Eigen::Index len =
        std::min<Eigen::Index>(n, r0 + detail::kPointBlock) - r0;
    VecX best = VecX::Constant(len, std::numeric_limits<double>::infinity());
    for (int b = 0; b < k; ++b) {
      const auto e0 = pts.col(0).segment(r0, len).array() - center_pts(b, 0);
      const auto e1 = pts.col(1).segment(r0, len).array() - center_pts(b, 1);
      const auto e2 = pts.col(2).segment(r0, len).array() - center_pts(b, 2);
      const auto e3 = pts.col(3).segment(r0, len).array() - center_pts(b, 3);
      const Eigen::ArrayXd dd =
          e0.square() + e1.square() + e2.square() + e3.square();
      for (Eigen::Index i = 0; i < len; ++i) {
        if (dd[i] < best[i]) {
          best[i] = dd[i];
          assign[r0 + i] = b;
        }
      }
    }
  });

  // Guarantee every component owns a point (duplicates can starve one).
  std::vector<Eigen::Index> owned(static_cast<size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) owned[assign[i]]++;
  for (int b = 0; b < k; ++b) {
    if (owned[b] > 0) continue;
    int donor = 0;
    for (int c = 1; c < k; ++c) {
      if (owned[c] > owned[donor]) donor = c;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (assign[i] == donor) {
        assign[i] = b;
        owned[donor]--;
        owned[b]++;
        break;
      }
    }
  }

  Responsibilities resp;
  resp.log_gamma = MatX::Constant(n, k, kNegInf);
  for (Eigen::Index i = 0; i < n; ++i) resp.log_gamma(i, assign[i]) = 0.0;
  return resp;
}

namespace detail {

double e_step_into(const MatX4& points, const Gmm4& model,
                   const CholeskyCache& cache, Eigen::Ref<MatX> log_gamma) {
  const Eigen::Index n = points.rows();
  const int m = model.components();

  // Column b holds ln(pi_b) + ln N(x | mu_b, Sigma_b) via the precision
  // factor: -0.5 (D ln 2pi + |P (x - mu)|^2) + sum ln diag(P). The fused
  // columnwise expression keeps the hot loop allocation-free.
  parallel_for_blocks(m, [&](std::int64_t b) {
    const int bi = static_cast<int>(b);
    const Vec4 mu = model.means.row(bi).transpose();
    const Mat4 p = cache.precision.block(bi);
    const double base = std::log(model.weights[bi]) +
                        cache.log_det_terms[bi] - 2.0 * kLog2Pi;
    const auto d0 = points.col(0).array() - mu[0];
    const auto d1 = points.col(1).array() - mu[1];
    const auto d2 = points.col(2).array() - mu[2];
    const auto d3 = points.col(3).array() - mu[3];
    log_gamma.col(bi).array() =
        base -
        0.5 * ((p(0, 0) * d0).square() + (p(1, 0) * d0 + p(1, 1) * d1).square() +
               (p(2, 0) * d0 + p(2, 1) * d1 + p(2, 2) * d2).square() +
               (p(3, 0) * d0 + p(3, 1) * d1 + p(3, 2) * d2 + p(3, 3) * d3)
                   .square());
  });

  const VecX row_lse = logsumexp_rows(log_gamma.leftCols(m));
  parallel_for_blocks(m, [&](std::int64_t b) {
    log_gamma.col(static_cast<int>(b)) -= row_lse;
  });

  // Blocked deterministic total.
  const std::int64_t nblocks = num_point_blocks(n);
  std::vector<double> partials(static_cast<size_t>(nblocks), 0.0);
  parallel_for_blocks(nblocks, [&](std::int64_t blk) {
    const Eigen::Index r0 = blk * kPointBlock;
    const Eigen::Index len = std::min<Eigen::Index>(n, r0 + kPointBlock) - r0;
    partials[static_cast<size_t>(blk)] = row_lse.segment(r0, len).sum();
  });
  double ll = 0.0;
  for (const double p : partials) ll += p;
  return ll;
}

}  // namespace detail

std::pair<Responsibilities, double> e_step(const PointCloud4D& cloud,
                                           const Gmm4& model,
                                           const CholeskyCache& cache) {
  Responsibilities resp;
  resp.log_gamma.resize(cloud.size(), model.components());
  const double ll =
      detail::e_step_into(cloud.points, model, cache, resp.log_gamma);
  return {std::move(resp), ll};
}

namespace detail {

Gmm4 m_step_impl(const MatX4& points, Eigen::Ref<const MatX> log_gamma,
                 double cov_reg, int* removed_out) {
  if (cov_reg < 0.0) throw std::invalid_argument("cov_reg must be >= 0");
  const Eigen::Index m = log_gamma.cols();
  if (log_gamma.rows() != points.rows()) {
    throw std::invalid_argument("responsibility rows != point count");
  }

  // Log weights below -700 are zeroed exactly: they are beyond the
  // degenerate-count resolution and their exp() lands in denormal territory,
  // which is drastically slower on x86.
  WeightedMoments wm = detail::weighted_moments_fn(
      points, m,
      [&](Eigen::Index b, Eigen::Index r0, Eigen::Index len, double* out) {
        const auto seg = log_gamma.col(b).segment(r0, len).array();
        Eigen::Map<Eigen::ArrayXd>(out, len) =
            (seg < -700.0).select(0.0, seg.max(-700.0).exp());
      });

  std::vector<int> keep;
  keep.reserve(static_cast<size_t>(m));
  {
    size_t di = 0;
    for (Eigen::Index b = 0; b < m; ++b) {
      if (di < wm.degenerate.size() && wm.degenerate[di] == b) {
        ++di;
      } else {
        keep.push_back(static_cast<int>(b));
      }
    }
  }
  if (removed_out) *removed_out = static_cast<int>(m) - static_cast<int>(keep.size());
  if (keep.empty()) throw NumericalError("m_step: all components degenerate");

  Gmm4 model;
  const auto mk = static_cast<Eigen::Index>(keep.size());
  model.weights = VecX(mk);
  model.means = MatX4(mk, 4);
  model.covariances = MatX10(mk, 10);
  double total = 0.0;
  for (Eigen::Index j = 0; j < mk; ++j) total += wm.counts[keep[j]];
  for (Eigen::Index j = 0; j < mk; ++j) {
    const int b = keep[j];
    model.weights[j] = wm.counts[b] / total;
    model.means.row(j) = wm.means.row(b);
    Mat4 cov = wm.scatters.block(b);
    cov.diagonal().array() += cov_reg;
    model.set_covariance(static_cast<int>(j), cov);
    Mat4 lower;
    if (!cholesky4(cov, lower)) {
      throw NumericalError("m_step: component " + std::to_string(j) +
                           " covariance not positive definite after "
                           "regularization");
    }
  }
  return model;
}

}  // namespace detail

Gmm4 m_step(const PointCloud4D& cloud, const Responsibilities& resp,
            double cov_reg, int* removed_out) {
  return detail::m_step_impl(cloud.points, resp.log_gamma, cov_reg,
                             removed_out);
}

FitResult fit(const PointCloud4D& cloud, double bandwidth, const EmParams& em,
              const GbmsParams* gbms) {
  cloud.validate();
  if (em.max_iters < 1 || !(em.ll_rel_tol > 0.0)) {
    throw std::invalid_argument("bad EM parameters");
  }
  GbmsParams gparams = gbms ? *gbms : GbmsParams{};
  gparams.bandwidth = bandwidth;

  FitResult result;
  const GbmsResult modes = gbms_estimate_components(cloud, gparams);
  result.gbms_components = modes.components;
  const int k = std::min<int>(modes.components, static_cast<int>(cloud.size()));

  const Responsibilities resp0 = kinit(cloud, k, em.seed);
  int removed = 0;
  Gmm4 model = m_step(cloud, resp0, em.cov_reg, &removed);
  result.removed_components = removed;

  MatX log_gamma(cloud.size(), model.components());
  double ll_prev = kNegInf;
  double ll = kNegInf;
  int iters = 0;
  for (int iter = 0; iter < em.max_iters; ++iter) {
    CholeskyCache cache = cholesky_cache(model);
    ll = detail::e_step_into(cloud.points, model, cache,
                             log_gamma.leftCols(model.components()));
    ++iters;
    if (iter > 0) {
      const double rel = std::abs(ll - ll_prev) /
                         std::max(std::abs(ll_prev), 1e-12);
      if (rel < em.ll_rel_tol) break;
    }
    ll_prev = ll;

    model = detail::m_step_impl(cloud.points,
                                log_gamma.leftCols(model.components()),
                                em.cov_reg, &removed);
    result.removed_components += removed;
  }

  result.model = std::move(model);
  result.em_iterations = iters;
  result.final_log_likelihood = ll;
  return result;
}

}  // namespace gmmscape
