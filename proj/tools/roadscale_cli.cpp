// roadscale: metric calibration of monocular depth predictions from a known
// camera height. Subcommands: calibrate, evaluate, ablate, synth-check, synth-export.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "roadscale/checks.hpp"
#include "roadscale/commands.hpp"
#include "roadscale/synth.hpp"

namespace {

using namespace roadscale;

struct CliOptions {
  RunConfig run;
  std::string strategy = "road-model";
  std::string crop = "garg";
  std::string out;
  std::string emit_calibrated;
  std::string alpha_from;
  double alpha = 0.0;
  double camera_height = 0.0;
  bool no_timestamp = false;
};

void add_run_flags(CLI::App* cmd, CliOptions& o, const std::string& default_out) {
  o.out = default_out;
  cmd->add_option("--root", o.run.root, "Dataset root (calib.json, pred/, mask/, gt/)")->required();
  cmd->add_option("--frames", o.run.frames, "Frame list file or glob over frame ids (default: all predictions)");
  cmd->add_option("--strategy", o.strategy, "road-model | gt-median | single-factor | fixed-plane")
      ->check(CLI::IsMember({"road-model", "gt-median", "single-factor", "fixed-plane"}))
      ->capture_default_str();
  cmd->add_option("--camera-height", o.camera_height, "Camera height in meters (overrides calib.json)");
  cmd->add_option("--max-width", o.run.filter.max_width_m, "Road gate |X| bound, meters")->capture_default_str();
  cmd->add_option("--max-length", o.run.filter.max_length_m, "Road gate Z bound, meters")->capture_default_str();
  cmd->add_option("--lmeds-samples", o.run.lmeds.num_samples, "LMedS minimal samples")->capture_default_str();
  cmd->add_option("--lmeds-inlier-k", o.run.lmeds.inlier_k, "Refinement band in robust sigmas")->capture_default_str();
  cmd->add_option("--lmeds-min-points", o.run.lmeds.min_points, "Minimum road points per frame")->capture_default_str();
  cmd->add_flag("!--no-tilt-correction", o.run.road_model.tilt_correction,
                "Use the plane offset as camera height instead of offset / normal.y");
  cmd->add_option("--seed", o.run.seed, "Run seed")->capture_default_str();
  cmd->add_option("--min-depth", o.run.eval.min_depth_m, "Evaluation lower depth bound")->capture_default_str();
  cmd->add_option("--max-depth", o.run.eval.max_depth_m, "Evaluation upper depth bound")->capture_default_str();
  cmd->add_option("--crop", o.crop, "none | garg")->check(CLI::IsMember({"none", "garg"}))->capture_default_str();
  cmd->add_option("--out", o.out, "Report path")->capture_default_str();
  cmd->add_option("--emit-calibrated", o.emit_calibrated, "Directory for calibrated depth PFMs");
  cmd->add_option("--alpha", o.alpha, "single-factor: fixed factor");
  cmd->add_option("--alpha-from", o.alpha_from, "single-factor: frame list whose median GT factor is applied");
  cmd->add_option("--jobs", o.run.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  cmd->add_flag("--no-timestamp", o.no_timestamp, "Omit generated_at from the JSON report");
}

RunConfig finalize(const CliOptions& o) {
  RunConfig c = o.run;
  c.strategy = parse_strategy(o.strategy);
  c.eval.crop = parse_crop(o.crop);
  c.out = o.out;
  if (o.camera_height != 0.0) c.camera_height_m = o.camera_height;
  if (!o.emit_calibrated.empty()) c.emit_calibrated = o.emit_calibrated;
  if (o.alpha != 0.0) c.alpha = o.alpha;
  if (!o.alpha_from.empty()) c.alpha_from = o.alpha_from;
  c.timestamp = !o.no_timestamp;
  return c;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

synth::SceneSpec load_scene(const std::string& path) {
  if (path.empty()) return synth::street_scene();
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingInput, "cannot open scene " + path);
  try {
    return synth::scene_from_json(nlohmann::json::parse(in), synth::street_scene());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path + ": " + e.what());
  }
}

int synth_check(std::uint64_t seed, const std::string& criteria, const std::string& scene_path) {
  const auto base = load_scene(scene_path);
  const auto names = criteria.empty() ? checks::check_names() : split_csv(criteria);
  bool all = true;
  for (const auto& name : names) {
    const auto r = checks::run_check(name, seed, base);
    std::cout << checks::format_result(r) << std::endl;
    all = all && r.passed;
  }
  std::cout << (all ? "all criteria passed" : "some criteria failed") << std::endl;
  return all ? 0 : 1;
}

struct ExportOptions {
  std::string out;
  std::string scene;
  int frames = 10;
  std::uint64_t seed = 0;
  double scale_min = 20.0;
  double scale_max = 40.0;
  double max_pitch = 0.0;
  double max_roll = 0.0;
  double noise = 0.0;
  double outliers = 0.0;
  double mislabel = 0.0;
  bool no_gt = false;
};

int synth_export(const ExportOptions& o) {
  const auto base = load_scene(o.scene);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<synth::SynthFrame> frames;
  std::vector<std::string> ids;
  nlohmann::json truth = nlohmann::json::array();
  for (int i = 0; i < o.frames; ++i) {
    synth::SceneSpec spec = base;
    spec.true_scale = o.scale_min + (o.scale_max - o.scale_min) * unit(rng);
    spec.road_pitch_deg = o.max_pitch * (2.0 * unit(rng) - 1.0);
    spec.road_roll_deg = o.max_roll * (2.0 * unit(rng) - 1.0);
    spec.noise_rel = o.noise;
    spec.outlier_frac = o.outliers;
    spec.mislabel_frac = o.mislabel;
    spec.seed = derive_seed(o.seed, static_cast<std::uint64_t>(i));
    frames.push_back(synth::generate_scene(spec));
    char id[32];
    std::snprintf(id, sizeof(id), "%06d", i);
    ids.emplace_back(id);
    truth.push_back({{"frame_id", ids.back()}, {"scene", synth::to_json(spec)}});
  }
  synth::export_dataset(o.out, ids, frames, base.camera_height_m, !o.no_gt);
  std::ofstream(fs::path(o.out) / "scenes.json") << truth.dump(2) << "\n";
  std::cout << "wrote " << o.frames << " frames to " << o.out << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric scale recovery for monocular depth predictions from a known camera height"};
  app.require_subcommand(1);

  CliOptions calib_opts, eval_opts, ablate_opts;
  auto* calibrate = app.add_subcommand("calibrate", "Per-frame scale factors and report");
  add_run_flags(calibrate, calib_opts, "calibration.json");
  auto* evaluate = app.add_subcommand("evaluate", "Scale, score against ground truth, print metrics");
  add_run_flags(evaluate, eval_opts, "evaluation.json");
  auto* ablate = app.add_subcommand("ablate", "Road gate length/width sweeps as CSV");
  add_run_flags(ablate, ablate_opts, "ablation.csv");

  std::uint64_t check_seed = 0;
  std::string criteria, check_scene;
  auto* check = app.add_subcommand("synth-check", "Run the synthetic verification suite");
  check->add_option("--seed", check_seed, "Suite seed")->capture_default_str();
  check->add_option("--criteria", criteria, "Comma list of: exact,robust,lmeds,warp,metrics,strategies,ablation,determinism");
  check->add_option("--scene", check_scene, "SceneSpec JSON overriding the base street scene");

  ExportOptions exp;
  auto* exporter = app.add_subcommand("synth-export", "Write a synthetic dataset in the calibrate/evaluate layout");
  exporter->add_option("--out", exp.out, "Output dataset root")->required();
  exporter->add_option("--scene", exp.scene, "SceneSpec JSON overriding the base street scene");
  exporter->add_option("--frames", exp.frames, "Frame count")->capture_default_str();
  exporter->add_option("--seed", exp.seed, "Seed")->capture_default_str();
  exporter->add_option("--scale-min", exp.scale_min, "Smallest true scale")->capture_default_str();
  exporter->add_option("--scale-max", exp.scale_max, "Largest true scale")->capture_default_str();
  exporter->add_option("--max-pitch", exp.max_pitch, "Road pitch drawn from [-x, x] degrees")->capture_default_str();
  exporter->add_option("--max-roll", exp.max_roll, "Road roll drawn from [-x, x] degrees")->capture_default_str();
  exporter->add_option("--noise", exp.noise, "Log-normal prediction noise sigma")->capture_default_str();
  exporter->add_option("--outliers", exp.outliers, "Fraction of road pixels with random depth")->capture_default_str();
  exporter->add_option("--mislabel", exp.mislabel, "Fraction of non-road pixels labeled road")->capture_default_str();
  exporter->add_flag("--no-gt", exp.no_gt, "Do not write ground truth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*calibrate) return cmd_calibrate(finalize(calib_opts));
    if (*evaluate) return cmd_evaluate(finalize(eval_opts));
    if (*ablate) return cmd_ablate(finalize(ablate_opts));
    if (*check) return synth_check(check_seed, criteria, check_scene);
    if (*exporter) return synth_export(exp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
