#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "roadscale/geometry.hpp"
#include "roadscale/synth.hpp"

namespace roadscale {
namespace {

const CameraIntrinsics kIntr{100.0, 100.0, 50.0, 50.0, 100, 100};

TEST(Backproject, PrincipalPoint) {
  const Point3 p = backproject(kIntr, 50, 50, 10);
  EXPECT_EQ(p, Point3(0, 0, 10));
}

TEST(Backproject, OneFocalLengthRight) { EXPECT_EQ(backproject(kIntr, 150, 50, 10), Point3(10, 0, 10)); }

TEST(Backproject, BelowCenterIsNegativeY) { EXPECT_EQ(backproject(kIntr, 50, 150, 10), Point3(0, -10, 10)); }

TEST(Backproject, RejectsInvalidDepth) {
  for (double d : {0.0, -1.0, std::nan(""), std::numeric_limits<double>::infinity()}) {
    try {
      backproject(kIntr, 10, 10, d);
      FAIL() << "depth " << d;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidDepth);
    }
  }
}

TEST(Project, OpticalAxis) {
  const Pixel px = project(kIntr, {0, 0, 5});
  EXPECT_EQ(px.u, 50);
  EXPECT_EQ(px.v, 50);
}

TEST(Project, BehindCamera) {
  try {
    project(kIntr, {0, 0, -1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BehindCamera);
  }
}

TEST(Project, InvertsBackprojectAndDepthIsHomogeneous) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uu(0, 99), dd(0.01, 200), aa(0.01, 100);
  for (int i = 0; i < 2000; ++i) {
    const double u = uu(rng), v = uu(rng), d = dd(rng), a = aa(rng);
    const Pixel px = project(kIntr, backproject(kIntr, u, v, d));
    EXPECT_NEAR(px.u, u, 1e-9);
    EXPECT_NEAR(px.v, v, 1e-9);
    const Point3 scaled = backproject(kIntr, u, v, a * d);
    EXPECT_LE((scaled - a * backproject(kIntr, u, v, d)).norm(), 1e-12 * scaled.norm());
  }
}

TEST(IntersectRayGround, Examples) {
  EXPECT_EQ(intersect_ray_ground(kIntr, 50, 60, 1.5), Point3(0, -1.5, 15));
  const Point3 p = intersect_ray_ground(kIntr, 60, 60, 1.5);
  EXPECT_NEAR(p.x(), 1.5, 1e-12);
  EXPECT_EQ(p.y(), -1.5);
  EXPECT_NEAR(p.z(), 15, 1e-12);
}

TEST(IntersectRayGround, HorizonHasNoIntersection) {
  for (double v : {50.0, 49.0, 0.0}) {
    try {
      intersect_ray_ground(kIntr, 50, v, 1.5);
      FAIL() << v;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::NoGroundIntersection);
    }
  }
}

TEST(IntersectRayGround, AlwaysOnGroundAndInFront) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uu(0, 99), vv(50.001, 99), hh(0.1, 5);
  for (int i = 0; i < 1000; ++i) {
    const double h = hh(rng);
    const Point3 p = intersect_ray_ground(kIntr, uu(rng), vv(rng), h);
    EXPECT_EQ(p.y(), -h);
    EXPECT_GT(p.z(), 0.0);
  }
  EXPECT_THROW(intersect_ray_ground(kIntr, 50, 60, 0.0), Error);
}

TEST(RigidTransform, Validity) {
  RigidTransform x;
  EXPECT_TRUE(x.valid());
  x.rotation(0, 0) = -1;  // reflection
  EXPECT_FALSE(x.valid());
  x.rotation = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitY()).toRotationMatrix();
  EXPECT_TRUE(x.valid());
  x.rotation *= 1.01;
  EXPECT_THROW(x.validate(), Error);
}

ImageRaster texture(int w, int h) { return synth::procedural_texture(w, h, 5); }

TEST(InverseWarp, IdentityReproducesSource) {
  const ImageRaster src = texture(100, 100);
  DepthRaster depth(100, 100, 1, 7.5f);
  depth.at(3, 4) = 0.0f;
  const auto w = inverse_warp(src, depth, RigidTransform::identity(), kIntr);
  for (int v = 0; v < 100; ++v) {
    for (int u = 0; u < 100; ++u) {
      if (u == 3 && v == 4) {
        EXPECT_EQ(w.valid.at(u, v), 0);
        continue;
      }
      ASSERT_EQ(w.valid.at(u, v), 1) << u << "," << v;
      EXPECT_NEAR(w.warped.at(u, v), src.at(u, v), 1e-9);
    }
  }
}

TEST(InverseWarp, OutOfBoundsIsInvalidAndZero) {
  const ImageRaster src = texture(100, 100);
  const DepthRaster depth(100, 100, 1, 10.0f);
  RigidTransform x;
  x.translation = {3.0, 0, 0};  // shifts reprojection 30 px right
  const auto w = inverse_warp(src, depth, x, kIntr);
  for (int v = 0; v < 100; ++v) {
    for (int u = 0; u < 100; ++u) {
      const bool inside = u + 30 <= 99;
      EXPECT_EQ(w.valid.at(u, v), inside ? 1 : 0);
      if (!inside) {
        EXPECT_EQ(w.warped.at(u, v), 0.0f);
      }
    }
  }
}

TEST(InverseWarp, BehindSourceCameraIsInvalid) {
  const ImageRaster src = texture(100, 100);
  const DepthRaster depth(100, 100, 1, 2.0f);
  RigidTransform x;
  x.translation = {0, 0, -5.0};
  const auto w = inverse_warp(src, depth, x, kIntr);
  for (auto m : w.valid.values) EXPECT_EQ(m, 0);
}

TEST(InverseWarp, ShapeMismatch) {
  try {
    inverse_warp(texture(50, 50), DepthRaster(100, 100, 1, 1.0f), {}, kIntr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

// Scaling depth and translation together leaves the warp unchanged.
TEST(InverseWarp, JointDepthTranslationScaleInvariance) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dd(2.0, 60.0), aa(0.05, 20.0);
  const ImageRaster src = texture(100, 100);
  for (int trial = 0; trial < 10; ++trial) {
    DepthRaster depth(100, 100);
    for (auto& d : depth.values) d = static_cast<float>(dd(rng));
    const RigidTransform x = synth::random_motion(rng, 2.0, 0.5);
    const auto base = inverse_warp(src, depth, x, kIntr);
    std::vector<double> alphas{0.1, 10.0, aa(rng)};
    for (double a : alphas) {
      DepthRaster scaled = depth;
      for (auto& d : scaled.values) d = static_cast<float>(a * d);
      RigidTransform xs = x;
      xs.translation *= a;
      const auto other = inverse_warp(src, scaled, xs, kIntr);
      double worst = 0.0;
      long joint = 0;
      for (std::size_t i = 0; i < base.valid.size(); ++i) {
        if (!base.valid.values[i] || !other.valid.values[i]) continue;
        ++joint;
        worst = std::max(worst, std::abs(double(base.warped.values[i]) - other.warped.values[i]));
      }
      EXPECT_GT(joint, 1000);
      EXPECT_LT(worst, 1e-6) << "alpha " << a;
    }
  }
}

}  // namespace
}  // namespace roadscale
