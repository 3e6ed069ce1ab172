#pragma once

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "roadscale/calibration.hpp"
#include "roadscale/dataio.hpp"
#include "roadscale/error.hpp"
#include "roadscale/metrics.hpp"
#include "roadscale/plane_fit.hpp"
#include "roadscale/stats.hpp"

namespace roadscale {

enum class Strategy { RoadModel, GtMedian, SingleFactor, FixedPlane };

inline std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::RoadModel: return "road-model";
    case Strategy::GtMedian: return "gt-median";
    case Strategy::SingleFactor: return "single-factor";
    case Strategy::FixedPlane: return "fixed-plane";
  }
  return "unknown";
}

inline Strategy parse_strategy(std::string_view s) {
  for (Strategy st : {Strategy::RoadModel, Strategy::GtMedian, Strategy::SingleFactor, Strategy::FixedPlane}) {
    if (s == to_string(st)) return st;
  }
  throw Error(Errc::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

/// Exit codes of the batch commands.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitAllFailed = 2 };

struct RunConfig {
  fs::path root;
  std::string frames;  // list file or glob over frame ids; empty selects every prediction
  Strategy strategy = Strategy::RoadModel;
  std::optional<double> camera_height_m;  // overrides calib.json
  RoadFilterConfig filter;
  LmedsConfig lmeds;
  RoadModelOptions road_model;
  EvalConfig eval;
  std::uint64_t seed = 0;
  fs::path out;
  std::optional<fs::path> emit_calibrated;
  std::optional<double> alpha;          // single-factor: fixed value
  std::optional<fs::path> alpha_from;   // single-factor: frame list to take the median over
  unsigned jobs = 0;                    // 0 = hardware concurrency
  bool timestamp = true;
};

/// Per-frame LMedS seed from the run seed and the frame's position in the sorted list.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["root"] = c.root.string();
  j["frames"] = c.frames;
  j["strategy"] = std::string(to_string(c.strategy));
  j["camera_height_m"] = c.camera_height_m ? nlohmann::json(*c.camera_height_m) : nlohmann::json("calib");
  j["road_filter"] = {{"max_width_m", c.filter.max_width_m},
                      {"max_length_m", c.filter.max_length_m},
                      {"road_class_id", c.filter.road_class_id}};
  j["lmeds"] = {{"num_samples", c.lmeds.num_samples},
                {"inlier_k", c.lmeds.inlier_k},
                {"min_points", c.lmeds.min_points},
                {"seed", c.seed},
                {"seed_derivation", "splitmix64(seed, frame index)"}};
  j["road_model"] = {{"tilt_correction", c.road_model.tilt_correction},
                     {"min_normal_y", c.road_model.min_normal_y}};
  j["eval"] = {{"min_depth_m", c.eval.min_depth_m},
               {"max_depth_m", c.eval.max_depth_m},
               {"crop", std::string(to_string(c.eval.crop))},
               {"clamp", "prediction clamped to [min_depth_m, max_depth_m]"}};
  j["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
  j["alpha_from"] = c.alpha_from ? nlohmann::json(c.alpha_from->string()) : nlohmann::json(nullptr);
  j["emit_calibrated"] = c.emit_calibrated ? nlohmann::json(c.emit_calibrated->string()) : nlohmann::json(nullptr);
  return j;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingInput, "cannot open frame list " + path.string());
  std::set<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    line = trim(line);
    if (!line.empty() && line[0] != '#') ids.insert(line);
  }
  return {ids.begin(), ids.end()};
}

}  // namespace detail

/// Sorted, de-duplicated frame ids.
inline std::vector<std::string> list_frames(const fs::path& root, const std::string& selector) {
  if (!selector.empty() && fs::is_regular_file(selector)) return detail::read_id_list(selector);
  const fs::path pred_dir = root / "pred";
  if (!fs::is_directory(pred_dir)) throw Error(Errc::MissingInput, "missing directory " + pred_dir.string());
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() != ".pfm") continue;
    const std::string id = entry.path().stem().string();
    if (selector.empty() || fnmatch(selector.c_str(), id.c_str(), 0) == 0) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

/// Runs `fn(i)` for i in [0, n) on a worker pool. Each index is visited once.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  unsigned workers = jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------

struct FrameOutcome {
  FrameRecord record;
  std::optional<DepthRaster> calibrated;
};

namespace detail {

inline CameraRig effective_rig(const FrameBundle& b, const RunConfig& cfg) {
  return cfg.camera_height_m ? CameraRig{*cfg.camera_height_m} : b.rig;
}

inline RoadFilterConfig effective_filter(const FrameBundle& b, const RunConfig& cfg) {
  RoadFilterConfig f = cfg.filter;
  if (b.road_class_id) f.road_class_id = static_cast<std::uint8_t>(*b.road_class_id);
  return f;
}

inline double frame_gt_median(const FrameBundle& b, const EvalConfig& eval) {
  if (!b.gt) throw Error(Errc::NoGroundTruth, "frame " + b.frame_id + " has no ground truth");
  return scale_gt_median(b.pred, restrict_to_eval_set(*b.gt, eval));
}

}  // namespace detail

/// Scales one loaded frame with the configured strategy and optionally scores it.
inline FrameOutcome calibrate_frame(const FrameBundle& b, std::size_t index, const RunConfig& cfg,
                                    std::optional<double> global_alpha, bool evaluate, bool keep_calibrated) {
  FrameOutcome out;
  FrameRecord& rec = out.record;
  rec.frame_id = b.frame_id;
  try {
    const CameraRig rig = detail::effective_rig(b, cfg);
    const RoadFilterConfig filter = detail::effective_filter(b, cfg);
    switch (cfg.strategy) {
      case Strategy::RoadModel: {
        LmedsConfig lmeds = cfg.lmeds;
        lmeds.seed = derive_seed(cfg.seed, index);
        const auto points = select_road_pixels(b.pred, b.mask, b.intr, rig, filter);
        const ScaleEstimate est = estimate_scale_road_model(points, rig, lmeds, cfg.road_model);
        rec.alpha = est.alpha;
        rec.h_uncal = est.h_uncal;
        rec.plane = est.plane;
        rec.n_road_points = est.n_road_points;
        break;
      }
      case Strategy::GtMedian:
        rec.alpha = detail::frame_gt_median(b, cfg.eval);
        break;
      case Strategy::SingleFactor:
        rec.alpha = global_alpha.value();
        break;
      case Strategy::FixedPlane: {
        rec.alpha = scale_fixed_plane(b.pred, b.mask, b.intr, rig, filter);
        rec.n_road_points = static_cast<int>(gate_road_pixels(b.pred, b.mask, b.intr, rig, filter).size());
        break;
      }
    }
    if (evaluate || keep_calibrated) {
      DepthRaster scaled = apply_scale(b.pred, rec.alpha);
      if (evaluate) {
        if (!b.gt) throw Error(Errc::NoGroundTruth, "frame " + b.frame_id + " has no ground truth");
        rec.metrics = compute_frame_metrics(scaled, *b.gt, cfg.eval);
      }
      if (keep_calibrated) out.calibrated = std::move(scaled);
    }
  } catch (const Error& e) {
    rec.error = e.code();
    rec.message = e.what();
    rec.metrics.reset();
    out.calibrated.reset();
  }
  return out;
}

namespace detail {

struct Dataset {
  std::vector<std::string> ids;
};

/// Validates the dataset root; throws Error for environment/config problems.
inline Dataset open_dataset(const RunConfig& cfg) {
  if (!fs::is_directory(cfg.root)) throw Error(Errc::MissingInput, "dataset root " + cfg.root.string() + " not found");
  read_calib(cfg.root / "calib.json");
  cfg.filter.validate();
  cfg.lmeds.validate();
  cfg.eval.validate();
  if (cfg.camera_height_m) CameraRig{*cfg.camera_height_m}.validate();
  Dataset d{list_frames(cfg.root, cfg.frames)};
  if (d.ids.empty()) throw Error(Errc::MissingInput, "no frames selected under " + cfg.root.string());
  return d;
}

/// Single-factor: explicit value, median over a listed set, or median over the run's own frames.
inline double resolve_single_factor(const RunConfig& cfg, const std::vector<std::string>& run_ids) {
  if (cfg.alpha) {
    if (!(*cfg.alpha > 0.0)) throw Error(Errc::InvalidScale, "--alpha must be positive");
    return *cfg.alpha;
  }
  const std::vector<std::string> ids = cfg.alpha_from ? read_id_list(*cfg.alpha_from) : run_ids;
  std::vector<double> alphas(ids.size(), 0.0);
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    try {
      alphas[i] = frame_gt_median(load_frame(cfg.root, ids[i]), cfg.eval);
    } catch (const Error&) {
      alphas[i] = 0.0;
    }
  });
  std::erase_if(alphas, [](double a) { return !(a > 0.0); });
  if (alphas.empty()) throw Error(Errc::NoGroundTruth, "no frame yields a ground-truth factor for single-factor scaling");
  return scale_single_factor(alphas);
}

inline std::vector<FrameOutcome> run_frames(const RunConfig& cfg, const std::vector<std::string>& ids,
                                            bool evaluate) {
  std::optional<double> global_alpha;
  if (cfg.strategy == Strategy::SingleFactor) global_alpha = resolve_single_factor(cfg, ids);
  const bool keep = cfg.emit_calibrated.has_value();
  if (keep) fs::create_directories(*cfg.emit_calibrated);
  std::vector<FrameOutcome> outcomes(ids.size());
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    try {
      FrameBundle b = load_frame(cfg.root, ids[i]);
      outcomes[i] = calibrate_frame(b, i, cfg, global_alpha, evaluate, keep);
      if (keep && outcomes[i].calibrated) {
        write_float_raster(*outcomes[i].calibrated, *cfg.emit_calibrated / (ids[i] + ".pfm"));
        outcomes[i].calibrated.reset();
      }
    } catch (const Error& e) {
      outcomes[i].record.frame_id = ids[i];
      outcomes[i].record.error = e.code();
      outcomes[i].record.message = e.what();
    }
  });
  return outcomes;
}

inline std::optional<FrameMetrics> aggregate_ok(const std::vector<FrameRecord>& records) {
  std::vector<FrameMetrics> m;
  for (const auto& r : records) {
    if (r.ok() && r.metrics) m.push_back(*r.metrics);
  }
  if (m.empty()) return std::nullopt;
  return aggregate_metrics(m);
}

inline int finish(const std::vector<FrameOutcome>& outcomes, const RunConfig& cfg, bool with_aggregate,
                  std::ostream& err) {
  std::vector<FrameRecord> records;
  records.reserve(outcomes.size());
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    records.push_back(o.record);
    if (!o.record.ok()) ++failed;
  }
  write_report(records, with_aggregate ? aggregate_ok(records) : std::nullopt, cfg.out,
               {config_to_json(cfg), cfg.timestamp});
  if (failed > 0) err << failed << " of " << records.size() << " frames failed\n";
  return failed == records.size() ? kExitAllFailed : kExitOk;
}

inline std::string fixed(double x, int prec = 3) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, x);
  return buf;
}

}  // namespace detail

/// Aligned metrics table: one header line and one row per (label, metrics).
inline void print_metrics_table(std::ostream& os, const std::vector<std::pair<std::string, FrameMetrics>>& rows) {
  const char* cols[] = {"Abs Rel", "Sq Rel", "RMSE", "RMSE log", "δ<1.25", "δ<1.25²", "δ<1.25³"};
  std::size_t label_w = 8;
  for (const auto& r : rows) label_w = std::max(label_w, r.first.size());
  auto pad = [](const std::string& s, std::size_t display_w, std::size_t w) {
    return std::string(w > display_w ? w - display_w : 0, ' ') + s;
  };
  // The δ headers hold multi-byte UTF-8; pad by display width.
  const std::size_t display[] = {7, 6, 4, 8, 6, 7, 7};
  constexpr std::size_t kColW = 10;
  os << std::string(label_w, ' ');
  for (int c = 0; c < 7; ++c) os << "  " << pad(cols[c], display[c], kColW);
  os << '\n';
  for (const auto& [label, m] : rows) {
    os << label << std::string(label_w - label.size(), ' ');
    const double vals[] = {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.d1, m.d2, m.d3};
    for (double v : vals) {
      const std::string s = detail::fixed(v);
      os << "  " << pad(s, s.size(), kColW);
    }
    os << '\n';
  }
}

/// Per-frame scale factors and a JSON/CSV report. Exit 2 when every frame fails.
inline int cmd_calibrate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto ds = detail::open_dataset(cfg);
    const auto outcomes = detail::run_frames(cfg, ds.ids, false);
    const int code = detail::finish(outcomes, cfg, false, err);
    out << "calibrated " << ds.ids.size() << " frames with " << to_string(cfg.strategy) << " -> " << cfg.out.string()
        << '\n';
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

/// Scales, scores against ground truth, prints the metrics table and writes the report.
inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto ds = detail::open_dataset(cfg);
    const auto outcomes = detail::run_frames(cfg, ds.ids, true);
    std::vector<FrameRecord> records;
    for (const auto& o : outcomes) records.push_back(o.record);
    const int code = detail::finish(outcomes, cfg, true, err);
    if (const auto agg = detail::aggregate_ok(records)) {
      print_metrics_table(out, {{std::string(to_string(cfg.strategy)), *agg}});
      out << "frames evaluated: " << agg->n_valid << " pixels over "
          << std::count_if(records.begin(), records.end(), [](const auto& r) { return r.ok(); }) << "/"
          << records.size() << " frames\n";
    }
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

inline const std::vector<double>& ablation_lengths() {
  static const std::vector<double> v{6, 10, 15, 20, 25, 30, 40, 60, 80};
  return v;
}

inline const std::vector<double>& ablation_widths() {
  static const std::vector<double> v{0.5, 1, 2, 3, 4, 5, 10, 15};
  return v;
}

struct AblationRow {
  std::string sweep;  // "length" or "width"
  double max_length_m = 0.0;
  double max_width_m = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  std::string first_failure;
  std::optional<FrameMetrics> metrics;
};

/// Gate sweeps over preloaded frames. Frames without ground truth still
/// contribute scale factors but no metrics.
inline std::vector<AblationRow> run_ablation(const std::vector<FrameBundle>& frames, const RunConfig& cfg) {
  if (cfg.strategy != Strategy::RoadModel && cfg.strategy != Strategy::FixedPlane) {
    throw Error(Errc::InvalidArgument, "ablation sweeps the road gate; use road-model or fixed-plane");
  }
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& sweep, double length, double width) {
    RunConfig c = cfg;
    c.filter.max_length_m = length;
    c.filter.max_width_m = width;
    std::vector<FrameOutcome> outcomes(frames.size());
    parallel_for(frames.size(), cfg.jobs, [&](std::size_t i) {
      outcomes[i] = calibrate_frame(frames[i], i, c, std::nullopt, frames[i].gt.has_value(), false);
    });
    AblationRow row;
    row.sweep = sweep;
    row.max_length_m = length;
    row.max_width_m = width;
    std::vector<FrameMetrics> m;
    for (const auto& o : outcomes) {
      if (o.record.ok()) {
        ++row.n_ok;
        if (o.record.metrics) m.push_back(*o.record.metrics);
      } else {
        ++row.n_failed;
        if (row.first_failure.empty()) row.first_failure = std::string(to_string(*o.record.error));
      }
    }
    if (!m.empty()) row.metrics = aggregate_metrics(m);
    rows.push_back(std::move(row));
  };
  for (double len : ablation_lengths()) run("length", len, cfg.filter.max_width_m);
  for (double w : ablation_widths()) run("width", cfg.filter.max_length_m, w);
  return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const fs::path& path) {
  std::ofstream csv(path);
  if (!csv) throw Error(Errc::IoError, "cannot write " + path.string());
  csv << "sweep,max_length_m,max_width_m,n_ok,n_failed,failure,abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3,n_valid\n";
  for (const auto& r : rows) {
    csv << r.sweep << ',' << format_g17(r.max_length_m) << ',' << format_g17(r.max_width_m) << ',' << r.n_ok << ','
        << r.n_failed << ',' << r.first_failure;
    if (r.metrics) {
      const auto& m = *r.metrics;
      for (double v : {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.d1, m.d2, m.d3}) csv << ',' << format_g17(v);
      csv << ',' << m.n_valid << '\n';
    } else {
      csv << ",,,,,,,,\n";
    }
  }
  if (!csv) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline int cmd_ablate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto ds = detail::open_dataset(cfg);
    std::vector<FrameBundle> frames;
    for (const auto& id : ds.ids) frames.push_back(load_frame(cfg.root, id));
    const auto rows = run_ablation(frames, cfg);
    write_ablation_csv(rows, cfg.out);
    for (const auto& r : rows) {
      out << r.sweep << " length=" << r.max_length_m << " width=" << r.max_width_m << " ok=" << r.n_ok
          << " failed=" << r.n_failed;
      if (r.metrics) out << " abs_rel=" << detail::fixed(r.metrics->abs_rel, 4);
      if (!r.first_failure.empty()) out << " (" << r.first_failure << ")";
      out << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace roadscale
