#pragma once

// Synthetic verification suite behind `roadscale synth-check` and the
// acceptance test binary. Each check builds its own scenes from a seed and
// reports pass/fail with the measured quantities.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "roadscale/calibration.hpp"
#include "roadscale/commands.hpp"
#include "roadscale/dataio.hpp"
#include "roadscale/metrics.hpp"
#include "roadscale/plane_fit.hpp"
#include "roadscale/synth.hpp"

namespace roadscale::checks {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(double x, int prec = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
  return buf;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline FrameBundle bundle_from(const synth::SynthFrame& f, const std::string& id, double height_m) {
  FrameBundle b;
  b.frame_id = id;
  b.pred = f.pred;
  b.mask = f.mask;
  b.gt = f.truth;
  b.intr = f.intr;
  b.rig = CameraRig{height_m};
  return b;
}

}  // namespace detail

// 1. Flat noiseless road: scale within 0.5% and under one second per frame.
inline CheckResult check_exact_recovery(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{1, "exact", true, {}};
  std::ostringstream d;
  for (double s : {5.0, 30.0, 50.0}) {
    synth::SceneSpec spec = base;
    spec.true_scale = s;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    const auto frame = synth::generate_scene(spec);
    const CameraRig rig{spec.camera_height_m};
    LmedsConfig lmeds;
    lmeds.seed = spec.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const auto points = select_road_pixels(frame.pred, frame.mask, frame.intr, rig, RoadFilterConfig{});
    const auto est = estimate_scale_road_model(points, rig, lmeds);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double err = std::abs(est.alpha / s - 1.0);
    const bool ok = err < 0.005 && secs < 1.0;
    r.passed = r.passed && ok;
    d << "s=" << s << " alpha=" << detail::fmt(est.alpha, 8) << " err=" << detail::fmt(err) << " t=" << detail::fmt(secs, 3)
      << "s; ";
  }
  r.detail = d.str();
  return r;
}

inline synth::SceneSpec robust_scene(std::uint64_t seed, int trial, const synth::SceneSpec& base) {
  std::mt19937_64 rng(derive_seed(seed, 1000 + trial));
  synth::SceneSpec spec = base;
  spec.road_pitch_deg = detail::uniform(rng, -5.0, 5.0);
  spec.road_roll_deg = detail::uniform(rng, -5.0, 5.0);
  spec.true_scale = detail::uniform(rng, 15.0, 45.0);
  spec.noise_rel = 0.02;
  spec.outlier_frac = 0.3;
  spec.mislabel_frac = 0.05;
  spec.seed = rng();
  return spec;
}

// 2. Tilted noisy road with outliers and mislabels: 5% in at least 19 of 20 trials.
inline CheckResult check_robust_recovery(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{2, "robust", false, {}};
  int within = 0;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto spec = robust_scene(seed, t, base);
    synth::TrialConfig cfg;
    cfg.lmeds.seed = spec.seed;
    try {
      const auto res = synth::run_scale_recovery_trial(spec, cfg);
      within += res.road_model_error < 0.05;
      worst = std::max(worst, res.road_model_error);
    } catch (const Error& e) {
      worst = std::max(worst, 1.0);
    }
  }
  r.passed = within >= 19;
  r.detail = std::to_string(within) + "/20 within 5%, worst error " + detail::fmt(worst);
  return r;
}

struct OutlierPlaneCase {
  std::vector<Point3> points;
  Plane3 truth;
};

/// 500 points, 45% gross outliers spread through the bounding volume, exact inliers.
inline OutlierPlaneCase lmeds_breakdown_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double tilt = detail::uniform(rng, 0.0, 10.0) * std::numbers::pi / 180.0;
  const double azimuth = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const Eigen::Vector3d n(std::sin(tilt) * std::cos(azimuth), std::cos(tilt), std::sin(tilt) * std::sin(azimuth));
  OutlierPlaneCase c;
  c.truth = Plane3{n, detail::uniform(rng, 1.0, 3.0)};
  const int n_out = 225;
  for (int i = 0; i < 500 - n_out; ++i) {
    const double x = detail::uniform(rng, -5.0, 5.0);
    const double z = detail::uniform(rng, 2.0, 30.0);
    const double y = -(n.x() * x + n.z() * z + c.truth.offset) / n.y();
    c.points.emplace_back(x, y, z);
  }
  for (int i = 0; i < n_out; ++i) {
    c.points.emplace_back(detail::uniform(rng, -5.0, 5.0), detail::uniform(rng, -6.0, 4.0), detail::uniform(rng, 2.0, 30.0));
  }
  std::shuffle(c.points.begin(), c.points.end(), rng);
  return c;
}

// 3. LMedS breakdown: normal within 1 degree and offset within 1%, every seed.
inline CheckResult check_lmeds_breakdown(std::uint64_t seed) {
  CheckResult r{3, "lmeds", false, {}};
  int good = 0;
  double worst_deg = 0.0, worst_off = 0.0;
  for (int s = 0; s < 50; ++s) {
    const auto c = lmeds_breakdown_case(derive_seed(seed, 2000 + s));
    LmedsConfig cfg;
    cfg.seed = derive_seed(seed, 3000 + s);
    try {
      const Plane3 p = fit_plane_lmeds(c.points, cfg);
      const double deg = std::acos(std::clamp(p.normal.dot(c.truth.normal), -1.0, 1.0)) * 180.0 / std::numbers::pi;
      const double off = std::abs(p.offset / c.truth.offset - 1.0);
      worst_deg = std::max(worst_deg, deg);
      worst_off = std::max(worst_off, off);
      good += deg < 1.0 && off < 0.01;
    } catch (const Error&) {
    }
  }
  r.passed = good == 50;
  r.detail = std::to_string(good) + "/50 seeds, worst normal " + detail::fmt(worst_deg) + " deg, worst offset " +
             detail::fmt(worst_off);
  return r;
}

// 4. Warp invariance under joint depth/translation scaling, with a translation-only negative control.
inline CheckResult check_warp_invariance(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{4, "warp", false, {}};
  synth::SceneSpec spec = base;
  spec.seed = derive_seed(seed, 4000);
  const auto frame = synth::generate_scene(spec);
  std::mt19937_64 rng(derive_seed(seed, 4001));
  const RigidTransform xform = synth::random_motion(rng, 2.0, 0.5);
  const auto diffs = synth::warp_invariance_check(frame, xform, {1.0, 0.1, 10.0});
  const double control = synth::warp_translation_only_diff(frame, xform, 10.0);
  r.passed = diffs[0] == 0.0 && diffs[1] < 1e-6 && diffs[2] < 1e-6 && control > 1e-3;
  r.detail = "alpha=1: " + detail::fmt(diffs[0]) + ", alpha=0.1: " + detail::fmt(diffs[1]) + ", alpha=10: " +
             detail::fmt(diffs[2]) + ", T-only control: " + detail::fmt(control);
  return r;
}

/// Straight per-pixel reference for the metric definitions, kept separate
/// from compute_frame_metrics: explicit pixel list, long double sums.
inline FrameMetrics brute_force_metrics(const DepthRaster& pred, const DepthRaster& gt, const EvalConfig& cfg) {
  int r0 = 0, r1 = gt.height, c0 = 0, c1 = gt.width;
  if (cfg.crop == Crop::Garg) {
    r0 = static_cast<int>(0.40810811 * gt.height);
    r1 = static_cast<int>(0.99189189 * gt.height);
    c0 = static_cast<int>(0.03594771 * gt.width);
    c1 = static_cast<int>(0.96405229 * gt.width);
  }
  std::vector<std::pair<long double, long double>> pairs;
  for (int row = r0; row < r1; ++row) {
    for (int col = c0; col < c1; ++col) {
      const long double g = gt.values[static_cast<std::size_t>(row) * gt.width + col];
      if (!(g > 0) || g < cfg.min_depth_m || g > cfg.max_depth_m) continue;
      long double p = pred.values[static_cast<std::size_t>(row) * gt.width + col];
      if (p < cfg.min_depth_m) p = cfg.min_depth_m;
      if (p > cfg.max_depth_m) p = cfg.max_depth_m;
      pairs.emplace_back(p, g);
    }
  }
  long double ar = 0, sr = 0, se = 0, sl = 0;
  long a1 = 0, a2 = 0, a3 = 0;
  for (const auto& [p, g] : pairs) {
    ar += std::fabs(p - g) / g;
    sr += (p - g) * (p - g) / g;
    se += (p - g) * (p - g);
    sl += (std::log(p) - std::log(g)) * (std::log(p) - std::log(g));
    const long double t = p > g ? p / g : g / p;
    if (t < 1.25L) ++a1;
    if (t < 1.5625L) ++a2;
    if (t < 1.953125L) ++a3;
  }
  const long double n = static_cast<long double>(pairs.size());
  FrameMetrics m;
  m.abs_rel = static_cast<double>(ar / n);
  m.sq_rel = static_cast<double>(sr / n);
  m.rmse = static_cast<double>(std::sqrt(se / n));
  m.rmse_log = static_cast<double>(std::sqrt(sl / n));
  m.d1 = static_cast<double>(a1 / n);
  m.d2 = static_cast<double>(a2 / n);
  m.d3 = static_cast<double>(a3 / n);
  m.n_valid = static_cast<long>(pairs.size());
  return m;
}

/// Random 16x16 pair with invalid pixels and values on both sides of the clamp range.
inline std::pair<DepthRaster, DepthRaster> random_metric_frame(std::mt19937_64& rng) {
  DepthRaster pred(16, 16), gt(16, 16);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double roll = detail::uniform(rng, 0.0, 1.0);
    gt.values[i] = roll < 0.2 ? 0.0f : static_cast<float>(detail::uniform(rng, 0.5, 95.0));
    const double pr = detail::uniform(rng, 0.0, 1.0);
    pred.values[i] = pr < 0.05   ? 0.0f
                     : pr < 0.5 ? static_cast<float>(gt.values[i] * detail::uniform(rng, 0.7, 1.4))
                                : static_cast<float>(detail::uniform(rng, 1e-4, 110.0));
  }
  return {pred, gt};
}

inline double max_field_diff(const FrameMetrics& a, const FrameMetrics& b) {
  double d = std::abs(static_cast<double>(a.n_valid - b.n_valid));
  for (auto [x, y] : {std::pair{a.abs_rel, b.abs_rel}, {a.sq_rel, b.sq_rel}, {a.rmse, b.rmse}, {a.rmse_log, b.rmse_log},
                      {a.d1, b.d1}, {a.d2, b.d2}, {a.d3, b.d3}}) {
    d = std::max(d, std::abs(x - y));
  }
  return d;
}

// 5. Metrics against the brute-force reference on 100 random frames, per frame and aggregated.
inline CheckResult check_metrics_oracle(std::uint64_t seed) {
  CheckResult r{5, "metrics", false, {}};
  std::mt19937_64 rng(derive_seed(seed, 5000));
  std::vector<FrameMetrics> impl, ref;
  double worst = 0.0;
  for (int f = 0; f < 100; ++f) {
    const auto [pred, gt] = random_metric_frame(rng);
    EvalConfig cfg;
    cfg.crop = f % 2 ? Crop::Garg : Crop::None;
    impl.push_back(compute_frame_metrics(pred, gt, cfg));
    ref.push_back(brute_force_metrics(pred, gt, cfg));
    worst = std::max(worst, max_field_diff(impl.back(), ref.back()));
  }
  FrameMetrics ref_agg;
  {
    long double s[7] = {0, 0, 0, 0, 0, 0, 0};
    for (const auto& m : ref) {
      s[0] += m.abs_rel, s[1] += m.sq_rel, s[2] += m.rmse, s[3] += m.rmse_log;
      s[4] += m.d1, s[5] += m.d2, s[6] += m.d3;
      ref_agg.n_valid += m.n_valid;
    }
    ref_agg.abs_rel = static_cast<double>(s[0] / 100), ref_agg.sq_rel = static_cast<double>(s[1] / 100);
    ref_agg.rmse = static_cast<double>(s[2] / 100), ref_agg.rmse_log = static_cast<double>(s[3] / 100);
    ref_agg.d1 = static_cast<double>(s[4] / 100), ref_agg.d2 = static_cast<double>(s[5] / 100);
    ref_agg.d3 = static_cast<double>(s[6] / 100);
  }
  const double agg_diff = max_field_diff(aggregate_metrics(impl), ref_agg);
  r.passed = worst < 1e-9 && agg_diff < 1e-9;
  r.detail = "max per-frame diff " + detail::fmt(worst) + ", aggregate diff " + detail::fmt(agg_diff);
  return r;
}

struct StrategyComparison {
  FrameMetrics road_model;
  FrameMetrics baseline;
};

/// Pitched scenes: road model against the fixed horizontal plane.
inline StrategyComparison compare_pitched(std::uint64_t seed, const synth::SceneSpec& base, int n_frames = 5) {
  std::vector<FrameMetrics> rm, fp;
  for (int i = 0; i < n_frames; ++i) {
    synth::SceneSpec spec = base;
    spec.road_pitch_deg = 3.0;
    spec.noise_rel = 0.02;
    spec.true_scale = 30.0;
    spec.seed = derive_seed(seed, 6000 + i);
    const auto f = synth::generate_scene(spec);
    const CameraRig rig{spec.camera_height_m};
    LmedsConfig lmeds;
    lmeds.seed = spec.seed;
    const auto est =
        estimate_scale_road_model(select_road_pixels(f.pred, f.mask, f.intr, rig, {}), rig, lmeds);
    const double fixed = scale_fixed_plane(f.pred, f.mask, f.intr, rig, {});
    rm.push_back(compute_frame_metrics(apply_scale(f.pred, est.alpha), f.truth, {}));
    fp.push_back(compute_frame_metrics(apply_scale(f.pred, fixed), f.truth, {}));
  }
  return {aggregate_metrics(rm), aggregate_metrics(fp)};
}

/// Per-frame scales spanning a factor of two: road model against one global
/// factor (median of the per-frame ground-truth factors).
inline StrategyComparison compare_jittered(std::uint64_t seed, const synth::SceneSpec& base, int n_frames = 8) {
  std::vector<synth::SynthFrame> frames;
  std::vector<double> gt_alphas;
  std::vector<FrameMetrics> rm;
  std::mt19937_64 rng(derive_seed(seed, 6500));
  for (int i = 0; i < n_frames; ++i) {
    synth::SceneSpec spec = base;
    spec.true_scale = 20.0 * std::pow(2.0, static_cast<double>(i) / (n_frames - 1));
    spec.road_pitch_deg = detail::uniform(rng, -2.0, 2.0);
    spec.road_roll_deg = detail::uniform(rng, -2.0, 2.0);
    spec.noise_rel = 0.02;
    spec.seed = derive_seed(seed, 6600 + i);
    frames.push_back(synth::generate_scene(spec));
    const auto& f = frames.back();
    const CameraRig rig{spec.camera_height_m};
    LmedsConfig lmeds;
    lmeds.seed = spec.seed;
    const auto est = estimate_scale_road_model(select_road_pixels(f.pred, f.mask, f.intr, rig, {}), rig, lmeds);
    rm.push_back(compute_frame_metrics(apply_scale(f.pred, est.alpha), f.truth, {}));
    gt_alphas.push_back(scale_gt_median(f.pred, restrict_to_eval_set(f.truth, {})));
  }
  const double global = scale_single_factor(gt_alphas);
  std::vector<FrameMetrics> single;
  for (const auto& f : frames) single.push_back(compute_frame_metrics(apply_scale(f.pred, global), f.truth, {}));
  return {aggregate_metrics(rm), aggregate_metrics(single)};
}

// 6. Road model beats the fixed plane on pitched roads and a global factor on jittered scales.
inline CheckResult check_strategy_ordering(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{6, "strategies", false, {}};
  const auto pitched = compare_pitched(seed, base);
  const auto jittered = compare_jittered(seed, base);
  r.passed = pitched.road_model.abs_rel < pitched.baseline.abs_rel &&
             jittered.road_model.abs_rel < jittered.baseline.abs_rel;
  r.detail = "pitched 3deg: road-model " + detail::fmt(pitched.road_model.abs_rel) + " vs fixed-plane " +
             detail::fmt(pitched.baseline.abs_rel) + "; jittered: road-model " +
             detail::fmt(jittered.road_model.abs_rel) + " vs single-factor " + detail::fmt(jittered.baseline.abs_rel);
  return r;
}

inline std::vector<FrameBundle> ablation_frames(std::uint64_t seed, const synth::SceneSpec& base, int n_frames = 4) {
  std::vector<FrameBundle> frames;
  std::mt19937_64 rng(derive_seed(seed, 7000));
  for (int i = 0; i < n_frames; ++i) {
    synth::SceneSpec spec = base;
    spec.true_scale = detail::uniform(rng, 20.0, 40.0);
    spec.outlier_frac = 0.1;
    spec.mislabel_frac = 0.05;
    spec.seed = derive_seed(seed, 7100 + i);
    frames.push_back(detail::bundle_from(synth::generate_scene(spec), "f" + std::to_string(i), spec.camera_height_m));
  }
  return frames;
}

// 7. Flat road with outliers and mislabels: Abs Rel over lengths 10..80 varies by
// less than 1% of its smallest value, and length 6 fails explicitly.
inline CheckResult check_ablation_plateau(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{7, "ablation", false, {}};
  RunConfig cfg;
  cfg.seed = seed;
  const auto rows = run_ablation(ablation_frames(seed, base), cfg);
  double lo = 1e300, hi = -1e300;
  bool plateau_complete = true;
  std::string at6 = "missing";
  bool collapsed = false;
  for (const auto& row : rows) {
    if (row.sweep != "length") continue;
    if (row.max_length_m == 6.0) {
      collapsed = row.n_ok == 0 && row.n_failed > 0;
      at6 = collapsed ? "all frames failed (" + row.first_failure + ")" : std::to_string(row.n_ok) + " frames calibrated";
      continue;
    }
    if (!row.metrics || row.n_failed > 0) {
      plateau_complete = false;
      continue;
    }
    lo = std::min(lo, row.metrics->abs_rel);
    hi = std::max(hi, row.metrics->abs_rel);
  }
  const double rel_spread = (hi - lo) / lo;
  r.passed = plateau_complete && rel_spread < 0.01 && collapsed;
  r.detail = "Abs Rel over lengths 10-80 in [" + detail::fmt(lo) + ", " + detail::fmt(hi) + "], relative spread " +
             detail::fmt(rel_spread) + "; length 6: " + at6;
  return r;
}

inline nlohmann::json strip_timestamp(nlohmann::json j) {
  j.erase("generated_at");
  return j;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Two calibrate runs with the same config and seed give identical reports.
inline CheckResult check_determinism(std::uint64_t seed, const synth::SceneSpec& base) {
  CheckResult r{8, "determinism", false, {}};
  const fs::path root = fs::temp_directory_path() / ("roadscale_determinism_" + std::to_string(seed) + "_" +
                                                     std::to_string(std::random_device{}()));
  try {
    std::vector<synth::SynthFrame> frames;
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) {
      frames.push_back(synth::generate_scene(robust_scene(seed, 100 + i, base)));
      ids.push_back("frame_" + std::to_string(i));
    }
    synth::export_dataset(root / "data", ids, frames, base.camera_height_m);
    RunConfig cfg;
    cfg.root = root / "data";
    cfg.seed = seed;
    cfg.jobs = 4;
    std::ostringstream sink;
    cfg.out = root / "a.json";
    const int ca = cmd_calibrate(cfg, sink, sink);
    cfg.out = root / "b.json";
    const int cb = cmd_calibrate(cfg, sink, sink);
    // The root path is part of the echoed config and identical for both runs.
    const bool same_json = strip_timestamp(read_report(root / "a.json")) == strip_timestamp(read_report(root / "b.json"));
    const bool same_csv = slurp(root / "a.csv") == slurp(root / "b.csv");
    r.passed = ca == kExitOk && cb == kExitOk && same_json && same_csv;
    r.detail = std::string("exit ") + std::to_string(ca) + "/" + std::to_string(cb) + ", json " +
               (same_json ? "identical" : "differs") + ", csv " + (same_csv ? "identical" : "differs");
  } catch (const std::exception& e) {
    r.detail = e.what();
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  return r;
}

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"exact", "robust", "lmeds", "warp",
                                              "metrics", "strategies", "ablation", "determinism"};
  return names;
}

inline CheckResult run_check(const std::string& name, std::uint64_t seed,
                             const synth::SceneSpec& base = synth::street_scene()) {
  const auto& names = check_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(Errc::InvalidArgument, "unknown check '" + name + "'");
  const int criterion = static_cast<int>(it - names.begin()) + 1;
  try {
    switch (criterion) {
      case 1: return check_exact_recovery(seed, base);
      case 2: return check_robust_recovery(seed, base);
      case 3: return check_lmeds_breakdown(seed);
      case 4: return check_warp_invariance(seed, base);
      case 5: return check_metrics_oracle(seed);
      case 6: return check_strategy_ordering(seed, base);
      case 7: return check_ablation_plateau(seed, base);
      default: return check_determinism(seed, base);
    }
  } catch (const std::exception& e) {
    return {criterion, name, false, std::string("exception: ") + e.what()};
  }
}

inline std::string format_result(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + "  [" + std::to_string(r.criterion) + "] " + r.name + ": " +
         r.detail;
}

}  // namespace roadscale::checks
