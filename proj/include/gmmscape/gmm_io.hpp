#pragma once

#include <string>

#include "gmmscape/gmm.hpp"

namespace gmmscape {

/// Wrong magic bytes or malformed structure.
struct GmmFormatError : IoError {
  using IoError::IoError;
};

/// File ends before the declared payload.
struct GmmTruncatedError : IoError {
  using IoError::IoError;
};

// Binary model format, little-endian:
//   magic "SGMM4D01" (8 bytes), u32 component count M,
//   f32 weights[M], f32 means[M*4], f32 covariances[M*10] (packed).
// Values are narrowed to f32 on save; load validates SPD covariances and
// renormalizes weights when |sum - 1| <= 1e-6 (errors beyond that).

void save_gmm(const Gmm4& model, const std::string& path);
Gmm4 load_gmm(const std::string& path);

/// JSON mirror for debugging: fields "weights", "means",
/// "covariances_packed" at full double precision.
void save_gmm_json(const Gmm4& model, const std::string& path);
Gmm4 load_gmm_json(const std::string& path);

}  // namespace gmmscape
