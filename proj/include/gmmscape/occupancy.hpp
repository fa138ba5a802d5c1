#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmmscape/gmm.hpp"
#include "gmmscape/se3.hpp"

namespace gmmscape {

struct GridParams {
  double resolution = 0.1;           // meters per voxel
  Vec3 origin = Vec3::Zero();        // min corner of voxel (0,0,0)
  Eigen::Vector3i dims = {1, 1, 1};  // voxel counts
  double log_odds_hit = 0.85;
  double log_odds_miss = -0.4;
  double log_odds_min = -3.5;
  double log_odds_max = 3.5;
  double occupied_threshold = 0.5;
  double free_threshold = -0.5;

  void validate() const;
};

/// Voxels of the grid crossed by the open segment [a, b] (positive chord
/// length), in order from a to b, clipped to the grid bounds. Exact
/// incremental grid walk; simultaneous axis steps skip corner-only touches.
std::vector<Eigen::Vector3i> traverse_segment(const GridParams& params,
                                              const Vec3& a, const Vec3& b);

/// Dense log-odds grid with a distinguished never-touched state.
class OccupancyGrid3D {
 public:
  explicit OccupancyGrid3D(const GridParams& params);

  const GridParams& params() const { return params_; }

  bool in_bounds(const Vec3& p) const;
  Eigen::Vector3i voxel_of(const Vec3& p) const;
  Vec3 voxel_center(const Eigen::Vector3i& v) const;

  bool touched(const Eigen::Vector3i& v) const;
  /// NaN for never-touched cells.
  double log_odds(const Eigen::Vector3i& v) const;

  /// Carves free space from origin toward end and records a hit at the end
  /// voxel when the ray is within trimmed_max_range; longer rays are trimmed
  /// to that range and update free space only. Zero-length rays are no-ops.
  /// Throws std::invalid_argument when the origin is outside the grid.
  void add_ray(const Vec3& origin, const Vec3& end, double trimmed_max_range);

  /// Samples the model and casts one ray per sample from the sensor
  /// position. Deterministic given seed.
  void insert_resampled_model(const Gmm4& model,
                              const RigidTransform& sensor_pose,
                              Eigen::Index num_pts, double trimmed_max_range,
                              std::uint64_t seed);

  // The three queries partition the grid: occupied (> occupied_threshold),
  // free (< free_threshold), unknown (never touched or between thresholds).
  std::vector<Vec3> query_occupied() const;
  std::vector<Vec3> query_free() const;
  std::vector<Vec3> query_unknown() const;

  std::int64_t cell_count() const { return static_cast<std::int64_t>(cells_.size()); }

  /// Occupied-voxel centers as PLY; intensity is the belief normalized from
  /// the occupied threshold to the upper clamp.
  void save_occupied_ply(const std::string& path, bool binary = true) const;

  /// Binary dump: magic "SGRD3D01", params, then f32 cells (NaN = unknown).
  void dump(const std::string& path) const;
  static OccupancyGrid3D load_dump(const std::string& path);

 private:
  void update_cell(std::int64_t idx, double delta);
  std::int64_t linear_index(const Eigen::Vector3i& v) const {
    return (static_cast<std::int64_t>(v.z()) * params_.dims.y() + v.y()) *
               params_.dims.x() +
           v.x();
  }

  GridParams params_;
  std::vector<double> cells_;  // NaN = never touched
};

}  // namespace gmmscape
