#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "roadscale/error.hpp"
#include "roadscale/geometry.hpp"
#include "roadscale/plane_fit.hpp"
#include "roadscale/raster.hpp"
#include "roadscale/stats.hpp"

namespace roadscale {

struct CameraRig {
  double height_m = 1.65;

  void validate() const {
    if (!(height_m > 0.0) || !std::isfinite(height_m)) {
      throw Error(Errc::InvalidArgument, "camera height must be positive");
    }
  }
};

/// Road pixels are kept when their flat-ground point satisfies
/// |X| < max_width_m and 0 < Z < max_length_m.
struct RoadFilterConfig {
  double max_width_m = 3.0;
  double max_length_m = 30.0;
  std::uint8_t road_class_id = 0;

  void validate() const {
    if (!(max_width_m > 0.0) || !(max_length_m > 0.0)) {
      throw Error(Errc::InvalidArgument, "road gate thresholds must be positive");
    }
  }
};

struct RoadModelOptions {
  /// Height below the camera measured along -Y (offset / normal.y). When
  /// false the orthogonal plane offset is used directly.
  bool tilt_correction = true;
  /// Fitted normals with y at or below this are rejected (more than 60° from vertical).
  double min_normal_y = 0.5;
};

struct ScaleEstimate {
  double alpha = 0.0;    // meters per prediction unit
  double h_uncal = 0.0;  // camera height in prediction units
  Plane3 plane;
  int n_road_points = 0;
};

struct RoadPixel {
  int u = 0;
  int v = 0;
  double ground_z = 0.0;  // Z of the flat-ground intersection at the rig height
};

namespace detail {

inline void check_frame_inputs(const DepthRaster& pred, const MaskRaster& mask, const CameraIntrinsics& intr) {
  intr.validate();
  if (!intr.matches(pred) || !intr.matches(mask)) {
    throw Error(Errc::ShapeMismatch, "prediction, mask and intrinsics dimensions disagree");
  }
}

}  // namespace detail

/// Road-labeled pixels with a valid prediction that pass the flat-ground gate.
/// The gate depends only on pixel position, intrinsics and rig height.
inline std::vector<RoadPixel> gate_road_pixels(const DepthRaster& pred, const MaskRaster& mask,
                                               const CameraIntrinsics& intr, const CameraRig& rig,
                                               const RoadFilterConfig& cfg) {
  detail::check_frame_inputs(pred, mask, intr);
  rig.validate();
  cfg.validate();
  std::vector<RoadPixel> kept;
  for (int v = 0; v < mask.height; ++v) {
    const double ray_y = -(v - intr.cy) / intr.fy;
    if (!(ray_y < 0.0)) continue;  // at or above the horizon
    for (int u = 0; u < mask.width; ++u) {
      if (mask.at(u, v) != cfg.road_class_id || !is_valid_depth(pred.at(u, v))) continue;
      const Point3 g = intersect_ray_ground(intr, u, v, rig.height_m);
      if (std::abs(g.x()) < cfg.max_width_m && g.z() > 0.0 && g.z() < cfg.max_length_m) {
        kept.push_back({u, v, g.z()});
      }
    }
  }
  return kept;
}

/// Backprojected uncalibrated points of the gated road pixels.
inline std::vector<Point3> select_road_pixels(const DepthRaster& pred, const MaskRaster& mask,
                                              const CameraIntrinsics& intr, const CameraRig& rig,
                                              const RoadFilterConfig& cfg) {
  const auto gated = gate_road_pixels(pred, mask, intr, rig, cfg);
  if (gated.empty()) {
    throw Error(Errc::NoRoadPixels, "no road pixel passes the gate");
  }
  std::vector<Point3> points;
  points.reserve(gated.size());
  for (const auto& px : gated) points.push_back(backproject(intr, px.u, px.v, pred.at(px.u, px.v)));
  return points;
}

/// Scale from a robust road-plane fit: the point below the camera lies on the
/// fitted plane, giving the camera height in prediction units.
inline ScaleEstimate estimate_scale_road_model(std::span<const Point3> points, const CameraRig& rig,
                                               const LmedsConfig& lmeds, const RoadModelOptions& opts = {}) {
  rig.validate();
  const Plane3 plane = fit_plane_lmeds(points, lmeds);
  if (!(plane.normal.y() > opts.min_normal_y)) {
    throw Error(Errc::ImplausibleRoadPlane, "fitted road normal y = " + std::to_string(plane.normal.y()));
  }
  const double h_uncal = opts.tilt_correction ? plane.offset / plane.normal.y() : plane.offset;
  if (!(h_uncal > 0.0)) {
    throw Error(Errc::ImplausibleRoadPlane, "camera is not above the fitted road plane");
  }
  ScaleEstimate est;
  est.alpha = rig.height_m / h_uncal;
  est.h_uncal = h_uncal;
  est.plane = plane;
  est.n_road_points = static_cast<int>(points.size());
  return est;
}

/// median(gt) / median(pred) over pixels with valid ground truth.
inline double scale_gt_median(const DepthRaster& pred, const DepthRaster& gt) {
  require_same_shape(pred, gt, "scale_gt_median");
  std::vector<double> g;
  std::vector<double> p;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!is_valid_depth(gt.values[i])) continue;
    g.push_back(gt.values[i]);
    p.push_back(pred.values[i]);
  }
  if (g.empty()) {
    throw Error(Errc::NoGroundTruth, "ground truth has no valid pixels");
  }
  const double mp = median_inplace(p);
  if (!(mp > 0.0) || !std::isfinite(mp)) {
    throw Error(Errc::DegeneratePrediction, "median prediction over ground-truth pixels is not positive");
  }
  return median_inplace(g) / mp;
}

/// Single global factor: median of per-frame factors.
inline double scale_single_factor(std::span<const double> per_frame_alphas) {
  if (per_frame_alphas.empty()) {
    throw Error(Errc::EmptyInput, "no per-frame factors");
  }
  std::vector<double> a(per_frame_alphas.begin(), per_frame_alphas.end());
  for (double x : a) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::InvalidScale, "per-frame factor must be positive");
  }
  return median_inplace(a);
}

/// Baseline against a horizontal plane at the rig height: pseudo ground truth
/// for gated road pixels is the flat-ground Z.
inline double scale_fixed_plane(const DepthRaster& pred, const MaskRaster& mask, const CameraIntrinsics& intr,
                                const CameraRig& rig, const RoadFilterConfig& cfg) {
  const auto gated = gate_road_pixels(pred, mask, intr, rig, cfg);
  if (gated.empty()) {
    throw Error(Errc::NoRoadPixels, "no road pixel passes the gate");
  }
  std::vector<double> pseudo;
  std::vector<double> p;
  pseudo.reserve(gated.size());
  p.reserve(gated.size());
  for (const auto& px : gated) {
    pseudo.push_back(px.ground_z);
    p.push_back(pred.at(px.u, px.v));
  }
  return median_inplace(pseudo) / median_inplace(p);
}

inline DepthRaster apply_scale(const DepthRaster& pred, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(Errc::InvalidScale, "scale factor must be finite and positive");
  }
  DepthRaster out = pred;
  for (auto& d : out.values) {
    d = is_valid_depth(d) ? static_cast<float>(alpha * d) : 0.0f;
  }
  return out;
}

}  // namespace roadscale
