#pragma once

#include <optional>
#include <string>

#include "gmmscape/point_cloud.hpp"

namespace gmmscape {

// Vertex-only PLY with float32 properties x, y, z, intensity (and optionally
// variance). Binary files are little-endian.

struct PlyCloud {
  PointCloud4D cloud;
  bool has_intensity = false;  // false: intensity column was filled with 0
};

void save_ply(const PointCloud4D& cloud, const std::string& path,
              bool binary = true, const VecX* variance = nullptr);

/// Reads ascii or binary_little_endian PLY. Properties other than
/// x/y/z/intensity are skipped; a missing intensity column yields zeros.
PlyCloud load_ply(const std::string& path);

}  // namespace gmmscape
