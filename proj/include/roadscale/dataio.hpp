#pragma once

#include <bit>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "json.hpp"
#include "roadscale/calibration.hpp"
#include "roadscale/error.hpp"
#include "roadscale/geometry.hpp"
#include "roadscale/metrics.hpp"
#include "roadscale/raster.hpp"

namespace roadscale {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PFM ("Pf", single channel). Rows are stored bottom-to-top; a negative
// scale marks little-endian samples, a positive one big-endian.

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::MissingInput, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t byteswap32(std::uint32_t x) noexcept {
  return (x >> 24) | ((x >> 8) & 0x0000ff00u) | ((x << 8) & 0x00ff0000u) | (x << 24);
}

class HeaderCursor {
 public:
  HeaderCursor(const std::vector<unsigned char>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  std::string token() {
    while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) fail("truncated header");
    return {bytes_.begin() + static_cast<std::ptrdiff_t>(start), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_)};
  }

  /// Consumes the single whitespace byte that terminates the header.
  std::size_t data_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing header terminator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(Errc::FormatError, path_.string() + ": " + why);
  }

 private:
  const std::vector<unsigned char>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

inline long long parse_dimension(HeaderCursor& cur) {
  const std::string tok = cur.token();
  if (tok.empty() || tok.size() > 9 || tok.find_first_not_of("0123456789") != std::string::npos) {
    cur.fail("bad dimension '" + tok + "'");
  }
  const long long value = std::stoll(tok);
  if (value <= 0 || value > (1 << 20)) cur.fail("dimension out of range");
  return value;
}

}  // namespace detail

inline DepthRaster read_float_raster(const fs::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::HeaderCursor cur(bytes, path);
  const std::string magic = cur.token();
  if (magic == "PF") cur.fail("three-channel PFM is not supported");
  if (magic != "Pf") cur.fail("bad magic '" + magic + "'");
  const long long w = detail::parse_dimension(cur);
  const long long h = detail::parse_dimension(cur);
  const std::string scale_tok = cur.token();
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_tok, &used);
    if (used != scale_tok.size()) cur.fail("bad scale '" + scale_tok + "'");
  } catch (const std::logic_error&) {
    cur.fail("bad scale '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) cur.fail("scale must be non-zero");
  const std::size_t offset = cur.data_offset();
  const unsigned long long count = static_cast<unsigned long long>(w) * static_cast<unsigned long long>(h);
  if (count > (1ULL << 31) || bytes.size() - offset != count * 4ULL) {
    cur.fail("payload size does not match " + std::to_string(w) + "x" + std::to_string(h));
  }
  const bool file_little = scale < 0.0;
  const bool swap = file_little != (std::endian::native == std::endian::little);
  DepthRaster r(static_cast<int>(w), static_cast<int>(h));
  const unsigned char* src = bytes.data() + offset;
  for (int row = 0; row < r.height; ++row) {
    const int v = r.height - 1 - row;
    for (int u = 0; u < r.width; ++u) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      src += 4;
      if (swap) bits = detail::byteswap32(bits);
      r.at(u, v) = std::bit_cast<float>(bits);
    }
  }
  return r;
}

inline void write_float_raster(const DepthRaster& raster, const fs::path& path) {
  std::string header = "Pf\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n";
  header += std::endian::native == std::endian::little ? "-1.0\n" : "1.0\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::IoError, "cannot write " + path.string());
  }
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (int v = raster.height - 1; v >= 0; --v) {
    out.write(reinterpret_cast<const char*>(&raster.at(0, v)), static_cast<std::streamsize>(raster.width * sizeof(float)));
  }
  if (!out) {
    throw Error(Errc::IoError, "write failed for " + path.string());
  }
}

// ---------------------------------------------------------------------------
// Single-channel PNG through libpng.

namespace detail {

struct PngGray {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

struct PngErrorSink {
  std::jmp_buf jump;
  char message[256] = {0};
};

inline void png_error_callback(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  std::longjmp(sink->jump, 1);
}

inline void png_warning_callback(png_structp, png_const_charp) {}

// No C++ objects with destructors live between setjmp and the libpng calls.
inline bool png_decode(std::FILE* fp, PngGray& out, png_bytep row, std::size_t row_capacity, PngErrorSink& sink,
                       int& channels, int& color_type) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_callback, png_warning_callback);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(sink.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  color_type = png_get_color_type(png, info);
  if (channels != 1 || color_type != PNG_COLOR_TYPE_GRAY || (out.bit_depth != 8 && out.bit_depth != 16) ||
      png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  if (png_get_rowbytes(png, info) > row_capacity ||
      static_cast<std::size_t>(out.width) * out.height > out.samples.size()) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  std::uint16_t* dst = out.samples.data();
  for (int v = 0; v < out.height; ++v) {
    png_read_row(png, row, nullptr);
    for (int u = 0; u < out.width; ++u) {
      *dst++ = out.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1]) : row[u];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_peek_size(std::FILE* fp, int& w, int& h) {
  unsigned char sig[24];
  if (std::fread(sig, 1, 24, fp) != 24 || png_sig_cmp(sig, 0, 8) != 0) return false;
  w = static_cast<int>((sig[16] << 24) | (sig[17] << 16) | (sig[18] << 8) | sig[19]);
  h = static_cast<int>((sig[20] << 24) | (sig[21] << 16) | (sig[22] << 8) | sig[23]);
  std::rewind(fp);
  return w > 0 && h > 0 && w <= (1 << 20) && h <= (1 << 20);
}

inline PngGray read_png_gray(const fs::path& path, int expected_bit_depth) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) {
    throw Error(Errc::MissingInput, "cannot open " + path.string());
  }
  PngGray img;
  int w = 0, h = 0;
  if (!png_peek_size(fp.get(), w, h)) {
    throw Error(Errc::FormatError, path.string() + ": not a PNG file");
  }
  img.samples.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  PngErrorSink sink;
  int channels = 0, color_type = 0;
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 2);
  if (!png_decode(fp.get(), img, row.data(), row.size(), sink, channels, color_type)) {
    throw Error(Errc::FormatError, path.string() + ": " + sink.message);
  }
  if (channels != 1 || color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(Errc::FormatError, path.string() + ": expected single-channel grayscale PNG");
  }
  if (img.bit_depth != expected_bit_depth) {
    throw Error(Errc::FormatError, path.string() + ": expected " + std::to_string(expected_bit_depth) +
                                       "-bit PNG, got " + std::to_string(img.bit_depth));
  }
  return img;
}

inline bool png_encode(std::FILE* fp, const std::uint16_t* samples, int w, int h, int bit_depth, png_bytep row,
                       PngErrorSink& sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_callback, png_warning_callback);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(sink.jump)) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::uint16_t s = samples[static_cast<std::size_t>(v) * w + u];
      if (bit_depth == 16) {
        row[2 * u] = static_cast<png_byte>(s >> 8);
        row[2 * u + 1] = static_cast<png_byte>(s & 0xff);
      } else {
        row[u] = static_cast<png_byte>(s);
      }
    }
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

inline void write_png_gray(const fs::path& path, const std::vector<std::uint16_t>& samples, int w, int h,
                           int bit_depth) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) {
    throw Error(Errc::IoError, "cannot write " + path.string());
  }
  PngErrorSink sink;
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 2);
  if (!png_encode(fp.get(), samples.data(), w, h, bit_depth, row.data(), sink)) {
    throw Error(Errc::IoError, path.string() + ": " + sink.message);
  }
}

}  // namespace detail

/// KITTI depth convention: meters = stored / 256, stored 0 is invalid.
inline DepthRaster read_depth_png16(const fs::path& path) {
  const auto img = detail::read_png_gray(path, 16);
  DepthRaster r(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    r.values[i] = static_cast<float>(img.samples[i] / 256.0);
  }
  return r;
}

/// Values that do not fit the 16-bit encoding (>= 256 m) are written as invalid.
inline void write_depth_png16(const DepthRaster& raster, const fs::path& path) {
  std::vector<std::uint16_t> samples(raster.size(), 0);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const float d = raster.values[i];
    if (!is_valid_depth(d)) continue;
    const double stored = std::round(d * 256.0);
    samples[i] = stored >= 1.0 && stored <= 65535.0 ? static_cast<std::uint16_t>(stored) : 0;
  }
  detail::write_png_gray(path, samples, raster.width, raster.height, 16);
}

inline MaskRaster read_mask_png(const fs::path& path) {
  const auto img = detail::read_png_gray(path, 8);
  MaskRaster r(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) r.values[i] = static_cast<std::uint8_t>(img.samples[i]);
  return r;
}

inline void write_mask_png(const MaskRaster& mask, const fs::path& path) {
  std::vector<std::uint16_t> samples(mask.values.begin(), mask.values.end());
  detail::write_png_gray(path, samples, mask.width, mask.height, 8);
}

// ---------------------------------------------------------------------------
// Dataset layout: root/calib.json, root/pred/<id>.pfm, root/mask/<id>.png,
// root/gt/<id>.png (optional), root/calib/<id>.json (optional override).

struct DatasetCalib {
  CameraIntrinsics intr;
  CameraRig rig;
  std::optional<int> road_class_id;
};

inline DatasetCalib parse_calib(const nlohmann::json& j, const std::string& origin) {
  try {
    DatasetCalib c;
    c.intr.fx = j.at("fx").get<double>();
    c.intr.fy = j.at("fy").get<double>();
    c.intr.cx = j.at("cx").get<double>();
    c.intr.cy = j.at("cy").get<double>();
    c.intr.width = j.at("width").get<int>();
    c.intr.height = j.at("height").get<int>();
    c.rig.height_m = j.at("camera_height_m").get<double>();
    if (j.contains("road_class_id")) c.road_class_id = j.at("road_class_id").get<int>();
    c.intr.validate();
    c.rig.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, origin + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::FormatError, origin + ": " + e.what());
  }
}

inline DatasetCalib read_calib(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::MissingInput, "cannot open " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path.string() + ": " + e.what());
  }
  return parse_calib(j, path.string());
}

inline void write_calib(const DatasetCalib& c, const fs::path& path) {
  nlohmann::json j = {{"fx", c.intr.fx},         {"fy", c.intr.fy},         {"cx", c.intr.cx},
                      {"cy", c.intr.cy},         {"width", c.intr.width},   {"height", c.intr.height},
                      {"camera_height_m", c.rig.height_m}};
  if (c.road_class_id) j["road_class_id"] = *c.road_class_id;
  std::ofstream out(path);
  if (!out) {
    throw Error(Errc::IoError, "cannot write " + path.string());
  }
  out << j.dump(2) << "\n";
}

struct FrameBundle {
  std::string frame_id;
  DepthRaster pred;
  MaskRaster mask;
  std::optional<DepthRaster> gt;
  CameraIntrinsics intr;
  CameraRig rig;
  std::optional<int> road_class_id;
};

struct LoadOptions {
  bool load_gt = true;
};

inline fs::path pred_path(const fs::path& root, const std::string& id) { return root / "pred" / (id + ".pfm"); }
inline fs::path mask_path(const fs::path& root, const std::string& id) { return root / "mask" / (id + ".png"); }
inline fs::path gt_path(const fs::path& root, const std::string& id) { return root / "gt" / (id + ".png"); }

inline FrameBundle load_frame(const fs::path& root, const std::string& frame_id, const LoadOptions& opts = {}) {
  const fs::path override_calib = root / "calib" / (frame_id + ".json");
  const DatasetCalib calib = read_calib(fs::exists(override_calib) ? override_calib : root / "calib.json");
  for (const auto& p : {pred_path(root, frame_id), mask_path(root, frame_id)}) {
    if (!fs::exists(p)) {
      throw Error(Errc::MissingInput, "missing " + p.string());
    }
  }
  FrameBundle b;
  b.frame_id = frame_id;
  b.intr = calib.intr;
  b.rig = calib.rig;
  b.road_class_id = calib.road_class_id;
  b.pred = read_float_raster(pred_path(root, frame_id));
  b.mask = read_mask_png(mask_path(root, frame_id));
  if (opts.load_gt && fs::exists(gt_path(root, frame_id))) {
    b.gt = read_depth_png16(gt_path(root, frame_id));
  }
  if (!b.intr.matches(b.pred) || !b.intr.matches(b.mask) || (b.gt && !b.intr.matches(*b.gt))) {
    throw Error(Errc::ShapeMismatch, "frame " + frame_id + ": raster dimensions disagree with calib " +
                                         std::to_string(b.intr.width) + "x" + std::to_string(b.intr.height));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Reports: JSON with per-frame records and an aggregate block, plus a CSV
// companion with one row per frame.

struct FrameRecord {
  std::string frame_id;
  std::optional<Errc> error;
  std::string message;
  double alpha = 0.0;
  std::optional<double> h_uncal;
  std::optional<Plane3> plane;
  int n_road_points = 0;
  std::optional<FrameMetrics> metrics;

  bool ok() const noexcept { return !error.has_value(); }
};

inline nlohmann::json to_json(const FrameMetrics& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse}, {"rmse_log", m.rmse_log},
          {"d1", m.d1},           {"d2", m.d2},         {"d3", m.d3},     {"n_valid", m.n_valid}};
}

inline FrameMetrics metrics_from_json(const nlohmann::json& j) {
  FrameMetrics m;
  m.abs_rel = j.at("abs_rel").get<double>();
  m.sq_rel = j.at("sq_rel").get<double>();
  m.rmse = j.at("rmse").get<double>();
  m.rmse_log = j.at("rmse_log").get<double>();
  m.d1 = j.at("d1").get<double>();
  m.d2 = j.at("d2").get<double>();
  m.d3 = j.at("d3").get<double>();
  m.n_valid = j.at("n_valid").get<long>();
  return m;
}

inline nlohmann::json to_json(const FrameRecord& r) {
  nlohmann::json j;
  j["frame_id"] = r.frame_id;
  j["status"] = r.ok() ? "ok" : std::string(to_string(*r.error));
  if (!r.ok()) j["message"] = r.message;
  j["alpha"] = r.ok() ? nlohmann::json(r.alpha) : nlohmann::json(nullptr);
  j["h_uncal"] = r.h_uncal ? nlohmann::json(*r.h_uncal) : nlohmann::json(nullptr);
  if (r.plane) {
    j["plane"] = {{"normal", {r.plane->normal.x(), r.plane->normal.y(), r.plane->normal.z()}}, {"c", r.plane->offset}};
  } else {
    j["plane"] = nullptr;
  }
  j["n_road_points"] = r.n_road_points;
  j["metrics"] = r.metrics ? to_json(*r.metrics) : nlohmann::json(nullptr);
  return j;
}

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string current_utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline fs::path csv_companion(const fs::path& json_path) {
  fs::path p = json_path;
  p.replace_extension(".csv");
  return p;
}

struct ReportOptions {
  nlohmann::json config = nlohmann::json::object();
  bool timestamp = true;
};

/// Writes `path` (JSON) and its `.csv` companion. The aggregate block is
/// omitted when `aggregate` is empty.
inline void write_report(const std::vector<FrameRecord>& frames, const std::optional<FrameMetrics>& aggregate,
                         const fs::path& path, const ReportOptions& opts = {}) {
  nlohmann::json j;
  if (opts.timestamp) j["generated_at"] = current_utc_timestamp();
  j["config"] = opts.config;
  j["frames"] = nlohmann::json::array();
  for (const auto& f : frames) j["frames"].push_back(to_json(f));
  if (aggregate) {
    j["aggregate"] = {{"metrics", to_json(*aggregate)}, {"config", opts.config}};
  }
  {
    std::ofstream out(path);
    if (!out) {
      throw Error(Errc::IoError, "cannot write " + path.string());
    }
    out << j.dump(2) << "\n";
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
  }
  std::ofstream csv(csv_companion(path));
  if (!csv) {
    throw Error(Errc::IoError, "cannot write " + csv_companion(path).string());
  }
  csv << "frame_id,status,alpha,h_uncal,normal_x,normal_y,normal_z,c,n_road_points,abs_rel,sq_rel,rmse,rmse_log,d1,d2,"
         "d3,n_valid\n";
  auto opt = [](bool have, double x) { return have ? format_g17(x) : std::string(); };
  for (const auto& f : frames) {
    csv << f.frame_id << ',' << (f.ok() ? "ok" : std::string(to_string(*f.error))) << ',' << opt(f.ok(), f.alpha)
        << ',' << opt(f.h_uncal.has_value(), f.h_uncal.value_or(0.0));
    const bool hp = f.plane.has_value();
    const Plane3 pl = f.plane.value_or(Plane3{});
    csv << ',' << opt(hp, pl.normal.x()) << ',' << opt(hp, pl.normal.y()) << ',' << opt(hp, pl.normal.z()) << ','
        << opt(hp, pl.offset) << ',' << f.n_road_points;
    const bool hm = f.metrics.has_value();
    const FrameMetrics m = f.metrics.value_or(FrameMetrics{});
    csv << ',' << opt(hm, m.abs_rel) << ',' << opt(hm, m.sq_rel) << ',' << opt(hm, m.rmse) << ','
        << opt(hm, m.rmse_log) << ',' << opt(hm, m.d1) << ',' << opt(hm, m.d2) << ',' << opt(hm, m.d3) << ','
        << (hm ? std::to_string(m.n_valid) : std::string()) << '\n';
  }
  if (!csv) throw Error(Errc::IoError, "write failed for " + csv_companion(path).string());
}

inline nlohmann::json read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::MissingInput, "cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path.string() + ": " + e.what());
  }
}

}  // namespace roadscale
