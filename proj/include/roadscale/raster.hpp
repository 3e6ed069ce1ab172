#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "roadscale/error.hpp"

namespace roadscale {

/// Dense row-major raster. Pixel (u, v) is column u, row v.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> values;

  Raster() = default;
  Raster(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c), values(checked_size(w, h, c), fill) {}

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }

  std::size_t index(int u, int v, int c = 0) const noexcept {
    return (static_cast<std::size_t>(v) * width + u) * channels + c;
  }
  T& at(int u, int v, int c = 0) { return values[index(u, v, c)]; }
  const T& at(int u, int v, int c = 0) const { return values[index(u, v, c)]; }

  bool in_bounds(int u, int v) const noexcept { return u >= 0 && v >= 0 && u < width && v < height; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const noexcept {
    return width == other.width && height == other.height;
  }

  static std::size_t checked_size(int w, int h, int c) {
    if (w <= 0 || h <= 0 || c <= 0) {
      throw Error(Errc::InvalidArgument, "raster dimensions must be positive");
    }
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c);
  }
};

/// Depth in meters (ground truth, calibrated) or prediction units. 0 marks an invalid pixel.
using DepthRaster = Raster<float>;
/// 8-bit class labels.
using MaskRaster = Raster<std::uint8_t>;
/// Intensities in [0, 1], one or three channels.
using ImageRaster = Raster<float>;

inline bool is_valid_depth(float d) noexcept { return std::isfinite(d) && d > 0.0f; }

template <typename T, typename U>
void require_same_shape(const Raster<T>& a, const Raster<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": " + std::to_string(a.width) + "x" +
                                         std::to_string(a.height) + " vs " + std::to_string(b.width) +
                                         "x" + std::to_string(b.height));
  }
}

}  // namespace roadscale
