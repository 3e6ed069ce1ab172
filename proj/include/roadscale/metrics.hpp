#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "roadscale/error.hpp"
#include "roadscale/raster.hpp"
#include "roadscale/stats.hpp"

namespace roadscale {

struct FrameMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;
  long n_valid = 0;
};

enum class Crop { None, Garg };

inline std::string_view to_string(Crop c) noexcept { return c == Crop::Garg ? "garg" : "none"; }

inline Crop parse_crop(std::string_view s) {
  if (s == "none") return Crop::None;
  if (s == "garg") return Crop::Garg;
  throw Error(Errc::InvalidArgument, "unknown crop '" + std::string(s) + "'");
}

struct EvalConfig {
  double min_depth_m = 1e-3;
  double max_depth_m = 80.0;
  Crop crop = Crop::Garg;

  void validate() const {
    if (!(min_depth_m > 0.0) || !(min_depth_m < max_depth_m)) {
      throw Error(Errc::InvalidArgument, "evaluation requires 0 < min_depth < max_depth");
    }
  }
};

/// Half-open pixel rectangle [u0, u1) x [v0, v1).
struct CropWindow {
  int u0 = 0, u1 = 0, v0 = 0, v1 = 0;
};

inline CropWindow crop_window(Crop crop, int width, int height) {
  if (crop == Crop::None) return {0, width, 0, height};
  return {static_cast<int>(0.03594771 * width), static_cast<int>(0.96405229 * width),
          static_cast<int>(0.40810811 * height), static_cast<int>(0.99189189 * height)};
}

/// Ground truth restricted to the evaluation set (crop and depth range); other pixels become invalid.
inline DepthRaster restrict_to_eval_set(const DepthRaster& gt, const EvalConfig& cfg) {
  cfg.validate();
  const CropWindow w = crop_window(cfg.crop, gt.width, gt.height);
  DepthRaster out(gt.width, gt.height, 1, 0.0f);
  for (int v = w.v0; v < w.v1; ++v) {
    for (int u = w.u0; u < w.u1; ++u) {
      const float g = gt.at(u, v);
      if (is_valid_depth(g) && g >= cfg.min_depth_m && g <= cfg.max_depth_m) out.at(u, v) = g;
    }
  }
  return out;
}

/// Standard depth error statistics over pixels inside the crop whose ground
/// truth lies in [min_depth, max_depth]; predictions are clamped to that range.
inline FrameMetrics compute_frame_metrics(const DepthRaster& pred, const DepthRaster& gt, const EvalConfig& cfg) {
  require_same_shape(pred, gt, "compute_frame_metrics");
  cfg.validate();
  const CropWindow w = crop_window(cfg.crop, gt.width, gt.height);
  CompensatedSum abs_rel, sq_rel, sq, sq_log;
  long n = 0, a1 = 0, a2 = 0, a3 = 0;
  for (int v = w.v0; v < w.v1; ++v) {
    for (int u = w.u0; u < w.u1; ++u) {
      const double g = gt.at(u, v);
      if (!is_valid_depth(gt.at(u, v)) || g < cfg.min_depth_m || g > cfg.max_depth_m) continue;
      double p = pred.at(u, v);
      if (!std::isfinite(p)) p = cfg.min_depth_m;
      p = std::clamp(p, cfg.min_depth_m, cfg.max_depth_m);
      const double diff = p - g;
      abs_rel.add(std::abs(diff) / g);
      sq_rel.add(diff * diff / g);
      sq.add(diff * diff);
      const double dl = std::log(p) - std::log(g);
      sq_log.add(dl * dl);
      const double ratio = std::max(p / g, g / p);
      a1 += ratio < 1.25;
      a2 += ratio < 1.25 * 1.25;
      a3 += ratio < 1.25 * 1.25 * 1.25;
      ++n;
    }
  }
  if (n == 0) {
    throw Error(Errc::NoValidPixels, "evaluation set is empty");
  }
  const double nd = static_cast<double>(n);
  FrameMetrics m;
  m.abs_rel = abs_rel.value() / nd;
  m.sq_rel = sq_rel.value() / nd;
  m.rmse = std::sqrt(sq.value() / nd);
  m.rmse_log = std::sqrt(sq_log.value() / nd);
  m.d1 = a1 / nd;
  m.d2 = a2 / nd;
  m.d3 = a3 / nd;
  m.n_valid = n;
  return m;
}

/// Unweighted mean of per-frame statistics; n_valid is summed.
inline FrameMetrics aggregate_metrics(std::span<const FrameMetrics> frames) {
  if (frames.empty()) {
    throw Error(Errc::EmptyInput, "no frames to aggregate");
  }
  CompensatedSum s[7];
  long n = 0;
  for (const auto& f : frames) {
    s[0].add(f.abs_rel);
    s[1].add(f.sq_rel);
    s[2].add(f.rmse);
    s[3].add(f.rmse_log);
    s[4].add(f.d1);
    s[5].add(f.d2);
    s[6].add(f.d3);
    n += f.n_valid;
  }
  const double k = static_cast<double>(frames.size());
  return {s[0].value() / k, s[1].value() / k, s[2].value() / k, s[3].value() / k,
          s[4].value() / k, s[5].value() / k, s[6].value() / k, n};
}

}  // namespace roadscale
