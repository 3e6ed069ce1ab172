#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "roadscale/commands.hpp"

namespace roadscale {
namespace {

namespace fs = std::filesystem;

const std::string kCli = ROADSCALE_CLI_PATH;

struct CliRun {
  int code = -1;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("roadscale_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) const {
    const fs::path log = dir_ / "stdout.txt";
    const std::string cmd = "'" + kCli + "' " + args + " > '" + log.string() + "' 2> '" + (dir_ / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  fs::path export_data(const std::string& name, const std::string& extra = "") const {
    const fs::path root = dir_ / name;
    EXPECT_EQ(run("synth-export --out '" + root.string() + "' --frames 4 --seed 3 " + extra).code, 0);
    return root;
  }

  std::string root_arg(const fs::path& root) const { return "--root '" + root.string() + "' "; }
  std::string out_arg(const std::string& name) const { return "--out '" + (dir_ / name).string() + "' "; }

  fs::path dir_;
};

std::vector<double> true_scales(const fs::path& root) {
  std::ifstream in(root / "scenes.json");
  const auto j = nlohmann::json::parse(in);
  std::vector<double> s;
  for (const auto& f : j) s.push_back(f["scene"]["true_scale"].get<double>());
  return s;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST_F(CliTest, CalibrateRecoversKnownScales) {
  const auto root = export_data("d", "--noise 0.01 --outliers 0.1 --mislabel 0.02");
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("r.json") + "--no-timestamp").code, kExitOk);
  const auto rep = read_report(dir_ / "r.json");
  const auto scales = true_scales(root);
  ASSERT_EQ(rep["frames"].size(), scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto& f = rep["frames"][i];
    ASSERT_EQ(f["status"], "ok");
    EXPECT_LT(std::abs(f["alpha"].get<double>() / scales[i] - 1.0), 0.01) << i;
    EXPECT_GT(f["n_road_points"].get<int>(), 1000);
    EXPECT_FALSE(f["plane"].is_null());
  }
  EXPECT_FALSE(rep.contains("aggregate"));
  EXPECT_EQ(rep["config"]["strategy"], "road-model");
  EXPECT_EQ(lines_of(dir_ / "r.csv").size(), scales.size() + 1);
}

TEST_F(CliTest, GtMedianWithoutGroundTruthFailsEveryFrame) {
  const auto root = export_data("d", "--no-gt");
  EXPECT_EQ(run("calibrate " + root_arg(root) + out_arg("r.json") + "--strategy gt-median").code, kExitAllFailed);
  const auto rep = read_report(dir_ / "r.json");
  for (const auto& f : rep["frames"]) EXPECT_EQ(f["status"], "NoGroundTruth");
}

TEST_F(CliTest, ConfigurationErrors) {
  const auto root = export_data("d");
  fs::remove(root / "calib.json");
  EXPECT_EQ(run("calibrate " + root_arg(root) + out_arg("r.json")).code, kExitConfig);
  EXPECT_EQ(run("calibrate " + root_arg(dir_ / "nowhere") + out_arg("r.json")).code, kExitConfig);
  EXPECT_EQ(run("calibrate --strategy unknown " + root_arg(root)).code, kExitConfig);
  EXPECT_EQ(run("calibrate").code, kExitConfig);
}

TEST_F(CliTest, EvaluatePerfectPredictionSingleFactorOne) {
  const auto root = export_data("d");
  for (const auto& id : list_frames(root, "")) {
    write_float_raster(read_depth_png16(gt_path(root, id)), pred_path(root, id));
  }
  const auto r = run("evaluate " + root_arg(root) + out_arg("e.json") + "--strategy single-factor --alpha 1");
  ASSERT_EQ(r.code, kExitOk);
  const auto m = metrics_from_json(read_report(dir_ / "e.json")["aggregate"]["metrics"]);
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.d1, 1.0);
  EXPECT_GT(m.n_valid, 0);
  for (const char* col : {"Abs Rel", "Sq Rel", "RMSE", "RMSE log", "δ<1.25", "δ<1.25²", "δ<1.25³"}) {
    EXPECT_NE(r.out.find(col), std::string::npos) << col;
  }
}

TEST_F(CliTest, SlopedRoadsFavorRoadModelOverFixedPlane) {
  const auto root = export_data("d", "--max-pitch 4 --noise 0.01");
  const std::string base = "evaluate " + root_arg(root) + "--no-timestamp ";
  ASSERT_EQ(run(base + out_arg("road.json")).code, kExitOk);
  ASSERT_EQ(run(base + out_arg("fixed.json") + "--strategy fixed-plane").code, kExitOk);
  const auto road = metrics_from_json(read_report(dir_ / "road.json")["aggregate"]["metrics"]);
  const auto fixed = metrics_from_json(read_report(dir_ / "fixed.json")["aggregate"]["metrics"]);
  EXPECT_LT(road.abs_rel, fixed.abs_rel);
}

TEST_F(CliTest, SingleFactorFromFrameList) {
  const auto root = export_data("d", "--noise 0.02");
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("gt.json") + "--strategy gt-median").code, kExitOk);
  std::vector<double> per_frame;
  const auto gt_rep = read_report(dir_ / "gt.json");
  for (const auto& f : gt_rep["frames"]) per_frame.push_back(f["alpha"].get<double>());
  std::ofstream(dir_ / "list.txt") << "000000\n000001\n000002\n";
  const double expected = scale_single_factor(std::vector<double>(per_frame.begin(), per_frame.begin() + 3));
  ASSERT_EQ(run("evaluate " + root_arg(root) + out_arg("s.json") + "--strategy single-factor --alpha-from '" +
                (dir_ / "list.txt").string() + "'")
                .code,
            kExitOk);
  const auto rep = read_report(dir_ / "s.json");
  ASSERT_EQ(rep["frames"].size(), 4u);
  for (const auto& f : rep["frames"]) EXPECT_EQ(f["alpha"].get<double>(), expected);
}

TEST_F(CliTest, AblateWritesBothSweeps) {
  const auto root = export_data("d", "--outliers 0.1");
  ASSERT_EQ(run("ablate " + root_arg(root) + out_arg("a.csv")).code, kExitOk);
  const auto rows = lines_of(dir_ / "a.csv");
  ASSERT_EQ(rows.size(), ablation_lengths().size() + ablation_widths().size() + 1);
  EXPECT_EQ(rows[1].rfind("length,6,3,0,4,NoRoadPixels", 0), 0u) << rows[1];
  EXPECT_EQ(rows[2].rfind("length,10,3,4,0,", 0), 0u) << rows[2];
}

TEST_F(CliTest, PerFrameFailureDoesNotAbortRun) {
  const auto root = export_data("d");
  MaskRaster m = read_mask_png(mask_path(root, "000001"));
  std::fill(m.values.begin(), m.values.end(), 13);
  write_mask_png(m, mask_path(root, "000001"));
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("r.json")).code, kExitOk);
  const auto frames = read_report(dir_ / "r.json")["frames"];
  EXPECT_EQ(frames[0]["status"], "ok");
  EXPECT_EQ(frames[1]["status"], "NoRoadPixels");
  EXPECT_TRUE(frames[1]["alpha"].is_null());
  EXPECT_EQ(frames[2]["status"], "ok");
}

TEST_F(CliTest, DeterministicAcrossRunsAndThreads) {
  const auto root = export_data("d", "--noise 0.02 --outliers 0.2");
  const std::string base = "evaluate " + root_arg(root) + "--no-timestamp --seed 5 ";
  ASSERT_EQ(run(base + out_arg("a.json") + "--jobs 1").code, kExitOk);
  ASSERT_EQ(run(base + out_arg("b.json") + "--jobs 3").code, kExitOk);
  EXPECT_EQ(lines_of(dir_ / "a.json"), lines_of(dir_ / "b.json"));
  EXPECT_EQ(lines_of(dir_ / "a.csv"), lines_of(dir_ / "b.csv"));
}

TEST_F(CliTest, EmitCalibratedDepth) {
  const auto root = export_data("d");
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("r.json") + "--emit-calibrated '" + (dir_ / "cal").string() +
                "'")
                .code,
            kExitOk);
  const auto rep = read_report(dir_ / "r.json");
  const double alpha = rep["frames"][0]["alpha"].get<double>();
  const auto pred = read_float_raster(pred_path(root, "000000"));
  const auto cal = read_float_raster(dir_ / "cal" / "000000.pfm");
  EXPECT_EQ(cal.values, apply_scale(pred, alpha).values);
}

TEST_F(CliTest, FrameSelection) {
  const auto root = export_data("d");
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("g.json") + "--frames '00000[13]'").code, kExitOk);
  const auto g = read_report(dir_ / "g.json")["frames"];
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0]["frame_id"], "000001");
  EXPECT_EQ(g[1]["frame_id"], "000003");
  std::ofstream(dir_ / "ids.txt") << "000002\n\n000000\n";
  ASSERT_EQ(run("calibrate " + root_arg(root) + out_arg("l.json") + "--frames '" + (dir_ / "ids.txt").string() + "'")
                .code,
            kExitOk);
  const auto l = read_report(dir_ / "l.json")["frames"];
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0]["frame_id"], "000000");
  EXPECT_EQ(l[1]["frame_id"], "000002");
}

TEST_F(CliTest, SynthCheckSelectedCriterion) {
  const auto r = run("synth-check --criteria warp,metrics --seed 4");
  EXPECT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[0].find("PASS"), std::string::npos);
  EXPECT_NE(lines[1].find("PASS"), std::string::npos);
  EXPECT_EQ(lines[2], "all criteria passed");
  EXPECT_EQ(run("synth-check --criteria nonsense").code, 1);
}

TEST_F(CliTest, SynthCheckFullSuiteSeveralSeeds) {
  for (int seed : {1, 2, 3}) EXPECT_EQ(run("synth-check --seed " + std::to_string(seed)).code, 0) << seed;
}

TEST(Commands, DeriveSeedSpreadsIndices) {
  EXPECT_EQ(derive_seed(0, 0), derive_seed(0, 0));
  EXPECT_NE(derive_seed(0, 0), derive_seed(0, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(0, 1));
}

TEST(Commands, StrategyNames) {
  for (auto s : {Strategy::RoadModel, Strategy::GtMedian, Strategy::SingleFactor, Strategy::FixedPlane}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("median"), Error);
}

}  // namespace
}  // namespace roadscale
