#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <png.h>

#include "roadscale/dataio.hpp"

namespace roadscale {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("roadscale_dataio_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

void write_bytes(const fs::path& p, const std::string& header, const std::vector<std::uint32_t>& words,
                 bool big_endian = false) {
  std::ofstream out(p, std::ios::binary);
  out << header;
  for (std::uint32_t w : words) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(w >> (big_endian ? 24 - 8 * i : 8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::IoError;
}

using Pfm = TempDir;

TEST_F(Pfm, LittleEndianHeaderBottomRowFirst) {
  // 2x2 image; the first stored row is the bottom image row.
  write_bytes(dir_ / "a.pfm", "Pf\n2 2\n-1.0\n",
              {std::bit_cast<std::uint32_t>(3.0f), std::bit_cast<std::uint32_t>(4.0f),
               std::bit_cast<std::uint32_t>(1.0f), std::bit_cast<std::uint32_t>(2.0f)});
  const auto r = read_float_raster(dir_ / "a.pfm");
  ASSERT_EQ(r.width, 2);
  ASSERT_EQ(r.height, 2);
  EXPECT_EQ(r.values, (std::vector<float>{1, 2, 3, 4}));
}

TEST_F(Pfm, BigEndianAccepted) {
  write_bytes(dir_ / "b.pfm", "Pf\n3 1\n1.0\n",
              {std::bit_cast<std::uint32_t>(0.5f), std::bit_cast<std::uint32_t>(-2.0f),
               std::bit_cast<std::uint32_t>(1e30f)},
              true);
  const auto r = read_float_raster(dir_ / "b.pfm");
  EXPECT_EQ(r.values, (std::vector<float>{0.5f, -2.0f, 1e30f}));
}

TEST_F(Pfm, RoundTripIsBitExact) {
  std::mt19937 rng(5);
  DepthRaster r(37, 11);
  for (auto& x : r.values) x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
  r.values[0] = std::numeric_limits<float>::denorm_min();
  r.values[1] = -0.0f;
  r.values[2] = std::numeric_limits<float>::infinity();
  r.values[3] = std::numeric_limits<float>::quiet_NaN();
  write_float_raster(r, dir_ / "r.pfm");
  const auto back = read_float_raster(dir_ / "r.pfm");
  ASSERT_TRUE(back.same_shape(r));
  EXPECT_EQ(std::memcmp(back.values.data(), r.values.data(), r.values.size() * 4), 0);
}

TEST_F(Pfm, MalformedIsFormatError) {
  const std::vector<std::uint32_t> four(4, 0);
  const std::vector<std::pair<std::string, std::vector<std::uint32_t>>> cases = {
      {"PF\n2 2\n-1.0\n", four},  {"P5\n2 2\n-1.0\n", four},  {"Pf\n2 2\n0.0\n", four},
      {"Pf\n2 2\nabc\n", four},   {"Pf\n2 x\n-1.0\n", four},  {"Pf\n-2 2\n-1.0\n", four},
      {"Pf\n2 2\n-1.0\n", {0, 0, 0}}, {"Pf\n2 2\n-1.0\n", {0, 0, 0, 0, 0}}, {"Pf\n2", {}},
  };
  int i = 0;
  for (const auto& [header, words] : cases) {
    const fs::path p = dir_ / ("bad" + std::to_string(i++) + ".pfm");
    write_bytes(p, header, words);
    EXPECT_EQ(error_of([&] { read_float_raster(p); }), Errc::FormatError) << header;
  }
}

TEST_F(Pfm, MissingFile) {
  EXPECT_EQ(error_of([&] { read_float_raster(dir_ / "none.pfm"); }), Errc::MissingInput);
}

using Png = TempDir;

void write_png_raw(const fs::path& p, int w, int h, png_uint_32 format, const std::vector<std::uint8_t>& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = w;
  img.height = h;
  img.format = format;
  ASSERT_TRUE(png_image_write_to_file(&img, p.c_str(), 0, bytes.data(), 0, nullptr));
}

TEST_F(Png, Depth16Convention) {
  DepthRaster r(4, 1);
  r.values = {100.0f, 0.0f, 1.0f / 256.0f, 255.99609375f};
  write_depth_png16(r, dir_ / "d.png");
  const auto back = read_depth_png16(dir_ / "d.png");
  EXPECT_EQ(back.values[0], 100.0f);  // stored 25600
  EXPECT_EQ(back.values[1], 0.0f);
  EXPECT_FALSE(is_valid_depth(back.values[1]));
  EXPECT_EQ(back.values[2], 1.0f / 256.0f);
  EXPECT_EQ(back.values[3], 65535.0f / 256.0f);
}

TEST_F(Png, EveryStoredValueDecodes) {
  DepthRaster r(256, 256);
  for (std::size_t i = 0; i < r.size(); ++i) r.values[i] = static_cast<float>(i / 256.0);
  write_depth_png16(r, dir_ / "all.png");
  const auto back = read_depth_png16(dir_ / "all.png");
  for (std::size_t i = 0; i < back.size(); ++i) {
    ASSERT_TRUE(std::isfinite(back.values[i]) && back.values[i] >= 0.0f) << i;
    ASSERT_EQ(back.values[i], static_cast<float>(i / 256.0)) << i;
  }
}

TEST_F(Png, MaskRoundTrip) {
  MaskRaster m(7, 5);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = static_cast<std::uint8_t>(i * 37);
  write_mask_png(m, dir_ / "m.png");
  EXPECT_EQ(read_mask_png(dir_ / "m.png").values, m.values);
}

TEST_F(Png, WrongLayoutIsFormatError) {
  write_png_raw(dir_ / "rgb.png", 2, 2, PNG_FORMAT_RGB, std::vector<std::uint8_t>(12, 9));
  write_png_raw(dir_ / "gray8.png", 2, 2, PNG_FORMAT_GRAY, std::vector<std::uint8_t>(4, 9));
  EXPECT_EQ(error_of([&] { read_depth_png16(dir_ / "rgb.png"); }), Errc::FormatError);
  EXPECT_EQ(error_of([&] { read_mask_png(dir_ / "rgb.png"); }), Errc::FormatError);
  EXPECT_EQ(error_of([&] { read_depth_png16(dir_ / "gray8.png"); }), Errc::FormatError);
  DepthRaster d(2, 2, 1, 1.0f);
  write_depth_png16(d, dir_ / "d16.png");
  EXPECT_EQ(error_of([&] { read_mask_png(dir_ / "d16.png"); }), Errc::FormatError);
  std::ofstream(dir_ / "junk.png") << "not a png at all";
  EXPECT_EQ(error_of([&] { read_mask_png(dir_ / "junk.png"); }), Errc::FormatError);
  EXPECT_EQ(error_of([&] { read_mask_png(dir_ / "nope.png"); }), Errc::MissingInput);
}

using Frames = TempDir;

void make_frame(const fs::path& root, const std::string& id, int w, int h, bool gt) {
  fs::create_directories(root / "pred");
  fs::create_directories(root / "mask");
  write_float_raster(DepthRaster(w, h, 1, 0.5f), pred_path(root, id));
  write_mask_png(MaskRaster(w, h, 1, 0), mask_path(root, id));
  if (gt) {
    fs::create_directories(root / "gt");
    write_depth_png16(DepthRaster(w, h, 1, 15.0f), gt_path(root, id));
  }
}

TEST_F(Frames, LoadWithAndWithoutGroundTruth) {
  write_calib({{100, 100, 5, 4, 10, 8}, {1.65}, std::nullopt}, dir_ / "calib.json");
  make_frame(dir_, "a", 10, 8, true);
  make_frame(dir_, "b", 10, 8, false);
  const auto a = load_frame(dir_, "a");
  ASSERT_TRUE(a.gt.has_value());
  EXPECT_EQ(a.gt->at(3, 3), 15.0f);
  EXPECT_EQ(a.pred.at(9, 7), 0.5f);
  EXPECT_DOUBLE_EQ(a.rig.height_m, 1.65);
  EXPECT_FALSE(a.road_class_id.has_value());
  EXPECT_FALSE(load_frame(dir_, "b").gt.has_value());
  EXPECT_FALSE(load_frame(dir_, "a", {false}).gt.has_value());
}

TEST_F(Frames, ShapeMismatchAndMissingInputs) {
  write_calib({{100, 100, 5, 4, 10, 8}, {1.65}, 7}, dir_ / "calib.json");
  make_frame(dir_, "small", 6, 8, false);
  EXPECT_EQ(error_of([&] { load_frame(dir_, "small"); }), Errc::ShapeMismatch);
  EXPECT_EQ(error_of([&] { load_frame(dir_, "ghost"); }), Errc::MissingInput);
  fs::remove(dir_ / "calib.json");
  make_frame(dir_, "ok", 10, 8, false);
  EXPECT_EQ(error_of([&] { load_frame(dir_, "ok"); }), Errc::MissingInput);
}

TEST_F(Frames, PerFrameCalibOverride) {
  write_calib({{100, 100, 5, 4, 10, 8}, {1.65}, std::nullopt}, dir_ / "calib.json");
  fs::create_directories(dir_ / "calib");
  write_calib({{90, 90, 5, 4, 10, 8}, {2.0}, 3}, dir_ / "calib" / "x.json");
  make_frame(dir_, "x", 10, 8, false);
  const auto b = load_frame(dir_, "x");
  EXPECT_DOUBLE_EQ(b.intr.fx, 90);
  EXPECT_DOUBLE_EQ(b.rig.height_m, 2.0);
  EXPECT_EQ(b.road_class_id, 3);
}

TEST_F(Frames, CalibValidation) {
  std::ofstream(dir_ / "bad.json") << R"({"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4})";
  EXPECT_EQ(error_of([&] { read_calib(dir_ / "bad.json"); }), Errc::FormatError);
  std::ofstream(dir_ / "neg.json") << R"({"fx": -1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4,
                                         "camera_height_m": 1.6})";
  EXPECT_EQ(error_of([&] { read_calib(dir_ / "neg.json"); }), Errc::FormatError);
  std::ofstream(dir_ / "syntax.json") << "{";
  EXPECT_EQ(error_of([&] { read_calib(dir_ / "syntax.json"); }), Errc::FormatError);
}

using Reports = TempDir;

FrameRecord ok_record(const std::string& id, double alpha) {
  FrameRecord r;
  r.frame_id = id;
  r.alpha = alpha;
  r.h_uncal = 1.65 / alpha;
  r.plane = Plane3{Eigen::Vector3d(0.01, 0.999, -0.02).normalized(), 0.055};
  r.n_road_points = 1234;
  FrameMetrics m;
  m.abs_rel = 0.1;
  m.d1 = 0.9;
  m.n_valid = 99;
  r.metrics = m;
  return r;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST_F(Reports, JsonAndCsv) {
  FrameRecord bad;
  bad.frame_id = "f2";
  bad.error = Errc::NoRoadPixels;
  bad.message = "no road pixel passes the gate";
  const double alpha = 0.1 + 0.2;  // not representable in short decimal form
  const std::vector<FrameRecord> frames{ok_record("f1", alpha), bad, ok_record("f3", 31.7)};
  FrameMetrics agg;
  agg.abs_rel = 0.1;
  write_report(frames, agg, dir_ / "r.json", {{{"strategy", "road-model"}}, false});
  const auto j = read_report(dir_ / "r.json");
  EXPECT_FALSE(j.contains("generated_at"));
  ASSERT_EQ(j["frames"].size(), 3u);
  EXPECT_EQ(j["frames"][0]["alpha"].get<double>(), alpha);
  EXPECT_EQ(j["frames"][1]["status"], "NoRoadPixels");
  EXPECT_TRUE(j["frames"][1]["alpha"].is_null());
  EXPECT_EQ(j["frames"][0]["status"], "ok");
  EXPECT_EQ(j["config"]["strategy"], "road-model");
  EXPECT_EQ(metrics_from_json(j["frames"][2]["metrics"]).n_valid, 99);
  EXPECT_TRUE(j.contains("aggregate"));

  const auto csv = lines_of(csv_companion(dir_ / "r.json"));
  ASSERT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[0].rfind("frame_id,status,alpha", 0), 0u);
  EXPECT_EQ(csv[1].rfind("f1,ok," + format_g17(alpha) + ",", 0), 0u);
  EXPECT_EQ(std::stod(format_g17(alpha)), alpha);
  EXPECT_EQ(csv[2].rfind("f2,NoRoadPixels,,", 0), 0u);
}

TEST_F(Reports, TimestampAndEmptyAggregate) {
  write_report({}, std::nullopt, dir_ / "e.json");
  const auto j = read_report(dir_ / "e.json");
  EXPECT_TRUE(j.contains("generated_at"));
  EXPECT_FALSE(j.contains("aggregate"));
  EXPECT_TRUE(j["frames"].empty());
  EXPECT_EQ(lines_of(dir_ / "e.csv").size(), 1u);
  EXPECT_EQ(error_of([&] { read_report(dir_ / "missing.json"); }), Errc::MissingInput);
}

}  // namespace
}  // namespace roadscale
