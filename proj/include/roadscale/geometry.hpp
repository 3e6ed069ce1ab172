#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>

#include "roadscale/error.hpp"
#include "roadscale/raster.hpp"

namespace roadscale {

/// Camera frame: origin at the optical center, X right, Y up, Z forward.
/// Image rows grow downward, so image v maps to -Y.
using Point3 = Eigen::Vector3d;

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const noexcept {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 && cx < width && cy > 0.0 &&
           cy < height && std::isfinite(fx) && std::isfinite(fy);
  }

  void validate() const {
    if (!valid()) {
      throw Error(Errc::InvalidArgument, "camera intrinsics violate fx,fy > 0 and 0 < c < size");
    }
  }

  template <typename T>
  bool matches(const Raster<T>& r) const noexcept {
    return r.width == width && r.height == height;
  }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  bool valid(double tol = 1e-9) const {
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    return (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }

  void validate() const {
    if (!valid()) {
      throw Error(Errc::InvalidArgument, "rotation is not orthonormal with det +1");
    }
  }

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
};

inline Point3 backproject(const CameraIntrinsics& intr, double u, double v, double depth) {
  if (!(std::isfinite(depth) && depth > 0.0)) {
    throw Error(Errc::InvalidDepth, "depth must be finite and positive");
  }
  return {(u - intr.cx) * depth / intr.fx, -(v - intr.cy) * depth / intr.fy, depth};
}

/// May return coordinates outside the image; callers check bounds.
inline Pixel project(const CameraIntrinsics& intr, const Point3& p) {
  if (!(p.z() > 0.0)) {
    throw Error(Errc::BehindCamera, "point has z <= 0");
  }
  return {intr.fx * p.x() / p.z() + intr.cx, -intr.fy * p.y() / p.z() + intr.cy};
}

/// Viewing ray through (u, v) with unit forward component.
inline Eigen::Vector3d pixel_ray(const CameraIntrinsics& intr, double u, double v) {
  return {(u - intr.cx) / intr.fx, -(v - intr.cy) / intr.fy, 1.0};
}

/// Intersection of the pixel ray with the flat ground Y = -h.
inline Point3 intersect_ray_ground(const CameraIntrinsics& intr, double u, double v, double h) {
  if (!(h > 0.0)) {
    throw Error(Errc::InvalidArgument, "camera height must be positive");
  }
  const Eigen::Vector3d dir = pixel_ray(intr, u, v);
  if (!(dir.y() < 0.0)) {
    throw Error(Errc::NoGroundIntersection, "pixel at or above the horizon");
  }
  const double t = h / -dir.y();
  Point3 p = t * dir;
  p.y() = -h;
  return p;
}

namespace detail {

inline double sample_bilinear(const ImageRaster& img, double u, double v, int c) {
  const double uc = std::clamp(u, 0.0, static_cast<double>(img.width - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(img.height - 1));
  const int u0 = static_cast<int>(std::floor(uc));
  const int v0 = static_cast<int>(std::floor(vc));
  const int u1 = std::min(u0 + 1, img.width - 1);
  const int v1 = std::min(v0 + 1, img.height - 1);
  const double du = uc - u0;
  const double dv = vc - v0;
  const double top = (1.0 - du) * img.at(u0, v0, c) + du * img.at(u1, v0, c);
  const double bottom = (1.0 - du) * img.at(u0, v1, c) + du * img.at(u1, v1, c);
  return (1.0 - dv) * top + dv * bottom;
}

}  // namespace detail

struct WarpResult {
  ImageRaster warped;
  MaskRaster valid;
};

/// Synthesizes the target view by sampling `src` at the reprojection of each
/// target pixel: backproject with `depth`, move by `xform`, project into `src`.
/// Pixels without valid depth, behind the source camera, or landing outside
/// the source image are invalid and set to 0.
inline WarpResult inverse_warp(const ImageRaster& src, const DepthRaster& depth, const RigidTransform& xform,
                               const CameraIntrinsics& intr) {
  if (!intr.matches(src) || !intr.matches(depth)) {
    throw Error(Errc::ShapeMismatch, "inverse_warp: rasters must match intrinsics");
  }
  WarpResult out{ImageRaster(src.width, src.height, src.channels, 0.0f), MaskRaster(src.width, src.height, 1, 0)};
  constexpr double kBorderEps = 1e-9;
  const double max_u = src.width - 1 + kBorderEps;
  const double max_v = src.height - 1 + kBorderEps;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float d = depth.at(u, v);
      if (!is_valid_depth(d)) continue;
      const Point3 q = xform.apply(backproject(intr, u, v, d));
      if (!(q.z() > 0.0)) continue;
      const Pixel s = project(intr, q);
      if (!(s.u >= -kBorderEps && s.u <= max_u && s.v >= -kBorderEps && s.v <= max_v)) continue;
      out.valid.at(u, v) = 1;
      for (int c = 0; c < src.channels; ++c) {
        out.warped.at(u, v, c) = static_cast<float>(detail::sample_bilinear(src, s.u, s.v, c));
      }
    }
  }
  return out;
}

}  // namespace roadscale
