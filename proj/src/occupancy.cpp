#include "gmmscape/occupancy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "gmmscape/inference.hpp"
#include "gmmscape/ply_io.hpp"

namespace gmmscape {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

void GridParams::validate() const {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  if (dims.minCoeff() < 1) throw std::invalid_argument("dims must be >= 1");
  if (!(free_threshold < occupied_threshold)) {
    throw std::invalid_argument("free_threshold must be < occupied_threshold");
  }
  if (!(log_odds_min < log_odds_max)) {
    throw std::invalid_argument("log-odds clamps out of order");
  }
}

std::vector<Eigen::Vector3i> traverse_segment(const GridParams& params,
                                              const Vec3& a, const Vec3& b) {
  // Work in grid units: voxel (i,j,k) spans [i, i+1) x ...
  const Vec3 ga = (a - params.origin) / params.resolution;
  const Vec3 gb = (b - params.origin) / params.resolution;
  const Vec3 d = gb - ga;
  const Vec3 hi = params.dims.cast<double>();

  // Clip the parameter range [0, 1] against the grid box.
  double t0 = 0.0, t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (ga[k] < 0.0 || ga[k] > hi[k]) return {};
      continue;
    }
    double ta = (0.0 - ga[k]) / d[k];
    double tb = (hi[k] - ga[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 >= t1) return {};

  const Vec3 start = ga + t0 * d;
  Eigen::Vector3i v;
  for (int k = 0; k < 3; ++k) {
    double c = std::floor(start[k]);
    // A start exactly on a boundary belongs to the voxel in the direction
    // of travel.
    if (start[k] == c && d[k] < 0.0) c -= 1.0;
    v[k] = static_cast<int>(
        std::clamp(c, 0.0, hi[k] - 1.0));
  }

  Eigen::Vector3i step;
  Vec3 t_max, t_delta;
  for (int k = 0; k < 3; ++k) {
    if (d[k] > 0.0) {
      step[k] = 1;
      t_max[k] = (static_cast<double>(v[k]) + 1.0 - ga[k]) / d[k];
      t_delta[k] = 1.0 / d[k];
    } else if (d[k] < 0.0) {
      step[k] = -1;
      t_max[k] = (static_cast<double>(v[k]) - ga[k]) / d[k];
      t_delta[k] = -1.0 / d[k];
    } else {
      step[k] = 0;
      t_max[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = std::numeric_limits<double>::infinity();
    }
  }

  std::vector<Eigen::Vector3i> out;
  out.push_back(v);
  for (;;) {
    const double t_next = t_max.minCoeff();
    if (t_next >= t1) break;
    // Step every axis whose boundary is crossed at t_next; simultaneous
    // steps skip the zero-chord voxels of edge and corner crossings.
    for (int k = 0; k < 3; ++k) {
      if (t_max[k] == t_next) {
        v[k] += step[k];
        t_max[k] += t_delta[k];
      }
    }
    if (v.x() < 0 || v.y() < 0 || v.z() < 0 || v.x() >= params.dims.x() ||
        v.y() >= params.dims.y() || v.z() >= params.dims.z()) {
      break;
    }
    out.push_back(v);
  }
  return out;
}

OccupancyGrid3D::OccupancyGrid3D(const GridParams& params) : params_(params) {
  params_.validate();
  const std::int64_t n = static_cast<std::int64_t>(params_.dims.x()) *
                         params_.dims.y() * params_.dims.z();
  cells_.assign(static_cast<size_t>(n), kNan);
}

bool OccupancyGrid3D::in_bounds(const Vec3& p) const {
  const Vec3 g = (p - params_.origin) / params_.resolution;
  for (int k = 0; k < 3; ++k) {
    if (g[k] < 0.0 || g[k] >= static_cast<double>(params_.dims[k])) return false;
  }
  return true;
}

Eigen::Vector3i OccupancyGrid3D::voxel_of(const Vec3& p) const {
  const Vec3 g = (p - params_.origin) / params_.resolution;
  Eigen::Vector3i v;
  for (int k = 0; k < 3; ++k) {
    v[k] = static_cast<int>(std::clamp(std::floor(g[k]), 0.0,
                                       static_cast<double>(params_.dims[k] - 1)));
  }
  return v;
}

Vec3 OccupancyGrid3D::voxel_center(const Eigen::Vector3i& v) const {
  return params_.origin +
         params_.resolution * (v.cast<double>() + Vec3::Constant(0.5));
}

bool OccupancyGrid3D::touched(const Eigen::Vector3i& v) const {
  return !std::isnan(cells_[static_cast<size_t>(linear_index(v))]);
}

double OccupancyGrid3D::log_odds(const Eigen::Vector3i& v) const {
  return cells_[static_cast<size_t>(linear_index(v))];
}

void OccupancyGrid3D::update_cell(std::int64_t idx, double delta) {
  double& cell = cells_[static_cast<size_t>(idx)];
  const double base = std::isnan(cell) ? 0.0 : cell;
  cell = std::clamp(base + delta, params_.log_odds_min, params_.log_odds_max);
}

void OccupancyGrid3D::add_ray(const Vec3& origin, const Vec3& end,
                              double trimmed_max_range) {
  if (!(trimmed_max_range > 0.0)) {
    throw std::invalid_argument("trimmed_max_range must be > 0");
  }
  if (!in_bounds(origin)) {
    throw std::invalid_argument("ray origin is outside the grid");
  }
  const Vec3 diff = end - origin;
  const double len = diff.norm();
  if (len == 0.0) return;

  const bool hit = len <= trimmed_max_range;
  const Vec3 dir = diff / len;
  // Nudge the endpoint along the ray so boundary-sitting ends resolve to a
  // unique voxel.
  const double eps = params_.resolution * 1e-9;
  const Vec3 target =
      origin + dir * (hit ? len + eps : trimmed_max_range);

  const auto voxels = traverse_segment(params_, origin, target);
  if (voxels.empty()) return;

  const size_t n = voxels.size();
  if (hit) {
    // Unclamped end voxel: an endpoint outside the grid matches nothing and
    // the ray degrades to free-space carving.
    const Vec3 ge = (end + dir * eps - params_.origin) / params_.resolution;
    const Eigen::Vector3i end_voxel(static_cast<int>(std::floor(ge.x())),
                                    static_cast<int>(std::floor(ge.y())),
                                    static_cast<int>(std::floor(ge.z())));
    for (size_t i = 0; i < n; ++i) {
      if (voxels[i] == end_voxel) {
        update_cell(linear_index(voxels[i]), params_.log_odds_hit);
      } else {
        update_cell(linear_index(voxels[i]), params_.log_odds_miss);
      }
    }
  } else {
    for (size_t i = 0; i < n; ++i) {
      update_cell(linear_index(voxels[i]), params_.log_odds_miss);
    }
  }
}

void OccupancyGrid3D::insert_resampled_model(const Gmm4& model,
                                             const RigidTransform& sensor_pose,
                                             Eigen::Index num_pts,
                                             double trimmed_max_range,
                                             std::uint64_t seed) {
  if (!in_bounds(sensor_pose.translation)) {
    throw std::invalid_argument("sensor position is outside the grid");
  }
  const PointCloud4D samples = joint_dist_sample(model, num_pts, seed);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    add_ray(sensor_pose.translation, samples.points.row(i).head<3>().transpose(),
            trimmed_max_range);
  }
}

std::vector<Vec3> OccupancyGrid3D::query_occupied() const {
  std::vector<Vec3> out;
  std::int64_t idx = 0;
  for (int z = 0; z < params_.dims.z(); ++z) {
    for (int y = 0; y < params_.dims.y(); ++y) {
      for (int x = 0; x < params_.dims.x(); ++x, ++idx) {
        const double c = cells_[static_cast<size_t>(idx)];
        if (!std::isnan(c) && c > params_.occupied_threshold) {
          out.push_back(voxel_center({x, y, z}));
        }
      }
    }
  }
  return out;
}

std::vector<Vec3> OccupancyGrid3D::query_free() const {
  std::vector<Vec3> out;
  std::int64_t idx = 0;
  for (int z = 0; z < params_.dims.z(); ++z) {
    for (int y = 0; y < params_.dims.y(); ++y) {
      for (int x = 0; x < params_.dims.x(); ++x, ++idx) {
        const double c = cells_[static_cast<size_t>(idx)];
        if (!std::isnan(c) && c < params_.free_threshold) {
          out.push_back(voxel_center({x, y, z}));
        }
      }
    }
  }
  return out;
}

std::vector<Vec3> OccupancyGrid3D::query_unknown() const {
  std::vector<Vec3> out;
  std::int64_t idx = 0;
  for (int z = 0; z < params_.dims.z(); ++z) {
    for (int y = 0; y < params_.dims.y(); ++y) {
      for (int x = 0; x < params_.dims.x(); ++x, ++idx) {
        const double c = cells_[static_cast<size_t>(idx)];
        if (std::isnan(c) || (c >= params_.free_threshold &&
                              c <= params_.occupied_threshold)) {
          out.push_back(voxel_center({x, y, z}));
        }
      }
    }
  }
  return out;
}

void OccupancyGrid3D::save_occupied_ply(const std::string& path,
                                        bool binary) const {
  std::vector<Vec3> centers;
  std::vector<double> belief;
  std::int64_t idx = 0;
  for (int z = 0; z < params_.dims.z(); ++z) {
    for (int y = 0; y < params_.dims.y(); ++y) {
      for (int x = 0; x < params_.dims.x(); ++x, ++idx) {
        const double c = cells_[static_cast<size_t>(idx)];
        if (!std::isnan(c) && c > params_.occupied_threshold) {
          centers.push_back(voxel_center({x, y, z}));
          belief.push_back((c - params_.occupied_threshold) /
                           (params_.log_odds_max - params_.occupied_threshold));
        }
      }
    }
  }
  PointCloud4D cloud;
  cloud.points.resize(static_cast<Eigen::Index>(centers.size()), 4);
  for (size_t i = 0; i < centers.size(); ++i) {
    cloud.points.row(static_cast<Eigen::Index>(i))
        << centers[i].x(), centers[i].y(), centers[i].z(),
        std::clamp(belief[i], 0.0, 1.0);
  }
  save_ply(cloud, path, binary);
}

namespace {

constexpr char kGridMagic[8] = {'S', 'G', 'R', 'D', '3', 'D', '0', '1'};

void put_f64(std::ostream& os, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(b, 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("grid dump truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("grid dump truncated");
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return u;
}

}  // namespace

void OccupancyGrid3D::dump(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kGridMagic, 8);
  put_f64(os, params_.resolution);
  for (int k = 0; k < 3; ++k) put_f64(os, params_.origin[k]);
  for (int k = 0; k < 3; ++k) put_u32(os, static_cast<std::uint32_t>(params_.dims[k]));
  put_f64(os, params_.log_odds_hit);
  put_f64(os, params_.log_odds_miss);
  put_f64(os, params_.log_odds_min);
  put_f64(os, params_.log_odds_max);
  put_f64(os, params_.occupied_threshold);
  put_f64(os, params_.free_threshold);
  for (const double c : cells_) {
    const float f = static_cast<float>(c);
    put_u32(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw IoError("write failed for " + path);
}

OccupancyGrid3D OccupancyGrid3D::load_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kGridMagic)) {
    throw IoError("bad grid dump magic in " + path);
  }
  GridParams p;
  p.resolution = get_f64(is);
  for (int k = 0; k < 3; ++k) p.origin[k] = get_f64(is);
  for (int k = 0; k < 3; ++k) p.dims[k] = static_cast<int>(get_u32(is));
  p.log_odds_hit = get_f64(is);
  p.log_odds_miss = get_f64(is);
  p.log_odds_min = get_f64(is);
  p.log_odds_max = get_f64(is);
  p.occupied_threshold = get_f64(is);
  p.free_threshold = get_f64(is);
  OccupancyGrid3D grid(p);
  for (double& c : grid.cells_) {
    c = static_cast<double>(std::bit_cast<float>(get_u32(is)));
  }
  return grid;
}

}  // namespace gmmscape
