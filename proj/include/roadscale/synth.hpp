#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "json.hpp"
#include "roadscale/calibration.hpp"
#include "roadscale/dataio.hpp"
#include "roadscale/error.hpp"
#include "roadscale/geometry.hpp"
#include "roadscale/plane_fit.hpp"
#include "roadscale/raster.hpp"

namespace roadscale::synth {

inline constexpr std::uint8_t kRoadLabel = 0;
inline constexpr std::uint8_t kSkyLabel = 10;
inline constexpr std::uint8_t kObstacleLabel = 13;

/// Axis-aligned obstacle in the camera frame, meters.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
};

struct SceneSpec {
  double camera_height_m = 1.65;
  double road_pitch_deg = 0.0;  // positive: road rises ahead
  double road_roll_deg = 0.0;   // positive: road higher on the right
  std::vector<Box> boxes;
  CameraIntrinsics intr{371.2, 368.64, 320.0, 96.0, 640, 192};
  double true_scale = 30.0;  // prediction = truth / true_scale
  double noise_rel = 0.0;    // log-normal sigma on predictions
  double outlier_frac = 0.0;
  double mislabel_frac = 0.0;
  std::uint64_t seed = 0;
  double max_range_m = 120.0;  // hits beyond this carry no depth

  void validate() const {
    intr.validate();
    const bool ok = camera_height_m > 0.0 && std::abs(road_pitch_deg) <= 15.0 && std::abs(road_roll_deg) <= 15.0 &&
                    true_scale > 0.0 && std::isfinite(true_scale) && noise_rel >= 0.0 && outlier_frac >= 0.0 &&
                    outlier_frac < 1.0 && mislabel_frac >= 0.0 && mislabel_frac < 1.0 && max_range_m > 0.0;
    if (!ok) {
      throw Error(Errc::InvalidArgument, "scene spec violates its invariants");
    }
  }
};

struct SynthFrame {
  DepthRaster truth;  // meters
  DepthRaster pred;   // prediction units
  MaskRaster mask;
  ImageRaster image;
  Plane3 plane_truth;  // metric
  CameraIntrinsics intr;
  double true_scale = 1.0;
};

/// Metric ground plane Y = -h' + X tan(roll) + Z tan(pitch) whose orthogonal
/// distance to the camera is the camera height.
inline Plane3 ground_plane(const SceneSpec& spec) {
  const double deg = std::numbers::pi / 180.0;
  const Eigen::Vector3d n(-std::tan(spec.road_roll_deg * deg), 1.0, -std::tan(spec.road_pitch_deg * deg));
  return Plane3{n.normalized(), spec.camera_height_m};
}

/// Three-cell-size value noise over pixel coordinates, in [0, 1].
inline ImageRaster procedural_texture(int width, int height, std::uint64_t seed) {
  ImageRaster img(width, height, 1, 0.0f);
  constexpr int kOctaves = 3;
  const int cells[kOctaves] = {24, 9, 4};
  const double weights[kOctaves] = {0.55, 0.3, 0.15};
  for (int o = 0; o < kOctaves; ++o) {
    const int cell = cells[o];
    const int gw = width / cell + 2;
    const int gh = height / cell + 2;
    std::mt19937_64 rng(seed * 7919ULL + static_cast<std::uint64_t>(o) + 1ULL);
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (auto& x : lattice) x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        const double gx = static_cast<double>(u) / cell;
        const double gy = static_cast<double>(v) / cell;
        const int x0 = static_cast<int>(gx);
        const int y0 = static_cast<int>(gy);
        // Smoothstep keeps the texture C1 so bilinear resampling sees structure, not facets.
        double fx = gx - x0, fy = gy - y0;
        fx = fx * fx * (3.0 - 2.0 * fx);
        fy = fy * fy * (3.0 - 2.0 * fy);
        auto L = [&](int x, int y) { return lattice[static_cast<std::size_t>(y) * gw + x]; };
        const double top = (1 - fx) * L(x0, y0) + fx * L(x0 + 1, y0);
        const double bot = (1 - fx) * L(x0, y0 + 1) + fx * L(x0 + 1, y0 + 1);
        img.at(u, v) += static_cast<float>(weights[o] * ((1 - fy) * top + fy * bot));
      }
    }
  }
  return img;
}

namespace detail {

/// Entry distance of a ray (origin at the camera) into a box, if any.
inline std::optional<double> ray_box(const Eigen::Vector3d& dir, const Box& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = box.center[a] - 0.5 * box.size[a];
    const double hi = box.center[a] + 0.5 * box.size[a];
    if (dir[a] == 0.0) {
      if (0.0 < lo || 0.0 > hi) return std::nullopt;
      continue;
    }
    double ta = lo / dir[a];
    double tb = hi / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (!(t0 > 0.0)) return std::nullopt;
  return t0;
}

}  // namespace detail

/// Ray-casts the tilted ground and the boxes, then derives the prediction by
/// dividing by the true scale and applying noise, outliers and mislabels.
inline SynthFrame generate_scene(const SceneSpec& spec) {
  spec.validate();
  const auto& intr = spec.intr;
  SynthFrame f;
  f.intr = intr;
  f.true_scale = spec.true_scale;
  f.plane_truth = ground_plane(spec);
  f.truth = DepthRaster(intr.width, intr.height);
  f.pred = DepthRaster(intr.width, intr.height);
  f.mask = MaskRaster(intr.width, intr.height, 1, kSkyLabel);
  f.image = procedural_texture(intr.width, intr.height, spec.seed);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Eigen::Vector3d dir = pixel_ray(intr, u, v);
      double t = std::numeric_limits<double>::infinity();
      std::uint8_t label = kSkyLabel;
      const double facing = f.plane_truth.normal.dot(dir);
      if (facing < 0.0) {
        t = -f.plane_truth.offset / facing;
        label = kRoadLabel;
      }
      for (const auto& box : spec.boxes) {
        if (const auto tb = detail::ray_box(dir, box); tb && *tb < t) {
          t = *tb;
          label = kObstacleLabel;
        }
      }
      f.mask.at(u, v) = label;
      if (!(t <= spec.max_range_m)) continue;
      // dir.z == 1, so the ray parameter is the Z-depth.
      const float p = static_cast<float>(t / spec.true_scale);
      f.pred.at(u, v) = p;
      f.truth.at(u, v) = static_cast<float>(static_cast<double>(p) * spec.true_scale);
    }
  }

  if (spec.noise_rel > 0.0) {
    for (auto& p : f.pred.values) {
      if (p > 0.0f) p = static_cast<float>(p * std::exp(spec.noise_rel * normal(rng)));
    }
  }
  const double near = 0.5 / spec.true_scale;
  const double far = spec.max_range_m / spec.true_scale;
  for (std::size_t i = 0; i < f.mask.size(); ++i) {
    if (spec.outlier_frac > 0.0 && f.mask.values[i] == kRoadLabel && f.pred.values[i] > 0.0f &&
        unit(rng) < spec.outlier_frac) {
      f.pred.values[i] = static_cast<float>(near + (far - near) * unit(rng));
    }
  }
  for (std::size_t i = 0; i < f.mask.size(); ++i) {
    if (spec.mislabel_frac > 0.0 && f.mask.values[i] != kRoadLabel && unit(rng) < spec.mislabel_frac) {
      f.mask.values[i] = kRoadLabel;
    }
  }
  return f;
}

/// KITTI-like 640x192 street with parked and leading vehicles.
inline SceneSpec street_scene() {
  SceneSpec s;
  const double h = s.camera_height_m;
  s.boxes = {
      {{-4.2, -h + 0.75, 13.0}, {1.8, 1.5, 4.2}},
      {{3.8, -h + 0.8, 21.0}, {1.8, 1.6, 4.5}},
      {{0.3, -h + 0.9, 34.0}, {1.9, 1.8, 4.6}},
  };
  return s;
}

struct TrialConfig {
  RoadFilterConfig filter;
  LmedsConfig lmeds;
  RoadModelOptions road_model;
};

struct TrialResult {
  ScaleEstimate estimate;
  double alpha_est = 0.0;
  double alpha_fixed = 0.0;
  double road_model_error = 0.0;   // |alpha_est / s - 1|
  double fixed_plane_error = 0.0;  // |alpha_fixed / s - 1|
};

inline TrialResult run_scale_recovery_trial(const SceneSpec& spec, const TrialConfig& cfg) {
  const SynthFrame frame = generate_scene(spec);
  const CameraRig rig{spec.camera_height_m};
  const auto points = select_road_pixels(frame.pred, frame.mask, frame.intr, rig, cfg.filter);
  TrialResult r;
  r.estimate = estimate_scale_road_model(points, rig, cfg.lmeds, cfg.road_model);
  r.alpha_est = r.estimate.alpha;
  r.alpha_fixed = scale_fixed_plane(frame.pred, frame.mask, frame.intr, rig, cfg.filter);
  r.road_model_error = std::abs(r.alpha_est / spec.true_scale - 1.0);
  r.fixed_plane_error = std::abs(r.alpha_fixed / spec.true_scale - 1.0);
  return r;
}

namespace detail {

inline double max_abs_diff_joint(const WarpResult& a, const WarpResult& b) {
  double worst = 0.0;
  long joint = 0;
  for (std::size_t i = 0; i < a.valid.size(); ++i) {
    if (!a.valid.values[i] || !b.valid.values[i]) continue;
    ++joint;
    for (int c = 0; c < a.warped.channels; ++c) {
      const std::size_t k = i * a.warped.channels + c;
      worst = std::max(worst, std::abs(static_cast<double>(a.warped.values[k]) - b.warped.values[k]));
    }
  }
  if (joint == 0) {
    throw Error(Errc::NoValidPixels, "warps share no valid pixels");
  }
  return worst;
}

inline RigidTransform scaled_translation(const RigidTransform& x, double alpha) {
  RigidTransform y = x;
  y.translation *= alpha;
  return y;
}

}  // namespace detail

/// Max abs intensity difference between warping with (D, R, T) and with
/// (alpha D, R, alpha T), one value per alpha.
inline std::vector<double> warp_invariance_check(const SynthFrame& frame, const RigidTransform& xform,
                                                 const std::vector<double>& alphas) {
  xform.validate();
  const WarpResult base = inverse_warp(frame.image, frame.truth, xform, frame.intr);
  std::vector<double> diffs;
  diffs.reserve(alphas.size());
  for (double alpha : alphas) {
    const WarpResult scaled =
        inverse_warp(frame.image, apply_scale(frame.truth, alpha), detail::scaled_translation(xform, alpha), frame.intr);
    diffs.push_back(detail::max_abs_diff_joint(base, scaled));
  }
  return diffs;
}

/// Negative control: scales the translation but not the depth.
inline double warp_translation_only_diff(const SynthFrame& frame, const RigidTransform& xform, double alpha) {
  const WarpResult base = inverse_warp(frame.image, frame.truth, xform, frame.intr);
  const WarpResult moved = inverse_warp(frame.image, frame.truth, detail::scaled_translation(xform, alpha), frame.intr);
  return detail::max_abs_diff_joint(base, moved);
}

/// Small random motion: rotation below `max_rot_deg` about a random axis and
/// a translation with components in [-max_t, max_t].
inline RigidTransform random_motion(std::mt19937_64& rng, double max_rot_deg, double max_t) {
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  Eigen::Vector3d axis(sym(rng), sym(rng), sym(rng));
  if (axis.norm() < 1e-6) axis = Eigen::Vector3d::UnitY();
  const double angle = sym(rng) * max_rot_deg * std::numbers::pi / 180.0;
  RigidTransform x;
  x.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  x.translation = Eigen::Vector3d(sym(rng), sym(rng), sym(rng)) * max_t;
  return x;
}

// JSON: used by the CLI for scene overrides.

inline nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : s.boxes) {
    boxes.push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}},
                     {"size", {b.size.x(), b.size.y(), b.size.z()}}});
  }
  return {{"camera_height_m", s.camera_height_m},
          {"road_pitch_deg", s.road_pitch_deg},
          {"road_roll_deg", s.road_roll_deg},
          {"boxes", boxes},
          {"intr",
           {{"fx", s.intr.fx},
            {"fy", s.intr.fy},
            {"cx", s.intr.cx},
            {"cy", s.intr.cy},
            {"width", s.intr.width},
            {"height", s.intr.height}}},
          {"true_scale", s.true_scale},
          {"noise_rel", s.noise_rel},
          {"outlier_frac", s.outlier_frac},
          {"mislabel_frac", s.mislabel_frac},
          {"seed", s.seed},
          {"max_range_m", s.max_range_m}};
}

/// Missing keys keep the values already in `base`.
inline SceneSpec scene_from_json(const nlohmann::json& j, SceneSpec base = {}) {
  try {
    auto take = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    take("camera_height_m", base.camera_height_m);
    take("road_pitch_deg", base.road_pitch_deg);
    take("road_roll_deg", base.road_roll_deg);
    take("true_scale", base.true_scale);
    take("noise_rel", base.noise_rel);
    take("outlier_frac", base.outlier_frac);
    take("mislabel_frac", base.mislabel_frac);
    take("seed", base.seed);
    take("max_range_m", base.max_range_m);
    if (j.contains("intr")) {
      const auto& k = j.at("intr");
      base.intr = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                   k.at("cy").get<double>(), k.at("width").get<int>(), k.at("height").get<int>()};
    }
    if (j.contains("boxes")) {
      base.boxes.clear();
      for (const auto& b : j.at("boxes")) {
        const auto c = b.at("center").get<std::vector<double>>();
        const auto sz = b.at("size").get<std::vector<double>>();
        if (c.size() != 3 || sz.size() != 3) throw Error(Errc::FormatError, "box center/size need 3 values");
        base.boxes.push_back({{c[0], c[1], c[2]}, {sz[0], sz[1], sz[2]}});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, std::string("scene spec: ") + e.what());
  }
  base.validate();
  return base;
}

/// Writes frames in the dataset layout read by load_frame.
inline void export_dataset(const fs::path& root, const std::vector<std::string>& ids,
                           const std::vector<SynthFrame>& frames, double camera_height_m, bool with_gt = true) {
  if (ids.size() != frames.size() || frames.empty()) {
    throw Error(Errc::InvalidArgument, "export_dataset needs one id per frame");
  }
  fs::create_directories(root / "pred");
  fs::create_directories(root / "mask");
  if (with_gt) fs::create_directories(root / "gt");
  write_calib({frames.front().intr, CameraRig{camera_height_m}, kRoadLabel}, root / "calib.json");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    write_float_raster(frames[i].pred, pred_path(root, ids[i]));
    write_mask_png(frames[i].mask, mask_path(root, ids[i]));
    if (with_gt) write_depth_png16(frames[i].truth, gt_path(root, ids[i]));
  }
}

}  // namespace roadscale::synth
