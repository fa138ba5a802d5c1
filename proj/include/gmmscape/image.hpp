#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmmscape {

/// Grayscale raster, 8- or 16-bit values in row-major order.
struct Image {
  int width = 0;
  int height = 0;
  int max_value = 255;  // 255 or 65535
  std::vector<std::uint16_t> pixels;

  std::uint16_t at(int u, int v) const {
    return pixels[static_cast<size_t>(v) * width + u];
  }
  std::uint16_t& at(int u, int v) {
    return pixels[static_cast<size_t>(v) * width + u];
  }
};

/// Loads PGM (P2/P5) or PNG by sniffing the header. Color PNG inputs use the
/// first channel as the gray value.
Image load_image(const std::string& path);

Image load_pgm(const std::string& path);
void save_pgm(const Image& img, const std::string& path);

Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

}  // namespace gmmscape
