#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "roadscale/error.hpp"
#include "roadscale/geometry.hpp"
#include "roadscale/stats.hpp"

namespace roadscale {

/// Plane normal·p + offset = 0 with a unit normal oriented upward (normal.y > 0).
/// For a camera above the plane the offset is its height above it.
struct Plane3 {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitY();
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return normal.dot(p) + offset; }

  /// Rescales to a unit normal and flips so that normal.y > 0. A horizontal
  /// normal (y == 0) is oriented so that the offset is non-negative.
  static Plane3 normalized(const Eigen::Vector3d& n, double c) {
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw Error(Errc::DegenerateGeometry, "plane normal has zero length");
    }
    Plane3 p{n / len, c / len};
    if (p.normal.y() < 0.0 || (p.normal.y() == 0.0 && p.offset < 0.0)) {
      p.normal = -p.normal;
      p.offset = -p.offset;
    }
    return p;
  }
};

struct LmedsConfig {
  int num_samples = 1000;
  std::uint64_t seed = 0;
  double inlier_k = 2.5;
  int min_points = 50;

  void validate() const {
    if (num_samples < 1 || !(inlier_k > 0.0) || min_points < 3) {
      throw Error(Errc::InvalidArgument, "LMedS config requires num_samples >= 1, inlier_k > 0, min_points >= 3");
    }
  }
};

inline double plane_residual(const Plane3& plane, const Point3& p) { return std::abs(plane.signed_distance(p)); }

namespace detail {

/// Unbiased index in [0, n) from raw 64-bit draws; avoids the
/// implementation-defined std::uniform_int_distribution so seeded runs are
/// reproducible across standard libraries.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

/// Exact plane through three points, or nothing when they are (near) collinear.
inline std::optional<Plane3> plane_through(const Point3& a, const Point3& b, const Point3& c) {
  const Eigen::Vector3d e1 = b - a;
  const Eigen::Vector3d e2 = c - a;
  const Eigen::Vector3d n = e1.cross(e2);
  const double scale = e1.norm() * e2.norm();
  if (!(scale > 0.0) || !(n.norm() >= 1e-12 * scale)) {
    return std::nullopt;
  }
  return Plane3::normalized(n, -n.dot(a));
}

/// Total-least-squares plane: normal is the eigenvector of the smallest
/// eigenvalue of the scatter matrix about the centroid.
inline Plane3 fit_plane_tls(std::span<const Point3> points) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    scatter.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::DegenerateGeometry, "eigen decomposition of inlier scatter failed");
  }
  const Eigen::Vector3d n = solver.eigenvectors().col(0);
  return Plane3::normalized(n, -n.dot(centroid));
}

inline double point_spread(std::span<const Point3> points) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double acc = 0.0;
  for (const auto& p : points) acc += (p - centroid).squaredNorm();
  return std::sqrt(acc / static_cast<double>(points.size()));
}

}  // namespace detail

/// Total-least-squares refit over the points within `band` of `plane`.
inline Plane3 refine_plane_inliers(std::span<const Point3> points, const Plane3& plane, double band) {
  std::vector<Point3> inliers;
  inliers.reserve(points.size());
  for (const auto& p : points) {
    if (plane_residual(plane, p) <= band) inliers.push_back(p);
  }
  if (inliers.size() < 3) {
    throw Error(Errc::TooFewInliers, std::to_string(inliers.size()) + " points within refinement band");
  }
  return detail::fit_plane_tls(inliers);
}

struct LmedsFit {
  Plane3 plane;
  Plane3 sample_plane;
  double median_sq_residual = 0.0;
  double band = 0.0;
  int samples_scored = 0;
};

/// Least Median of Squares plane fit with inlier polishing; returns the
/// diagnostics alongside the plane.
inline LmedsFit fit_plane_lmeds_detailed(std::span<const Point3> points, const LmedsConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  if (n < static_cast<std::size_t>(cfg.min_points)) {
    throw Error(Errc::TooFewPoints, std::to_string(n) + " points, need " + std::to_string(cfg.min_points));
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> sq(n);
  std::optional<Plane3> best;
  double best_score = std::numeric_limits<double>::infinity();
  int scored = 0;
  const long max_draws = 10L * cfg.num_samples;
  for (long draw = 0; draw < max_draws && scored < cfg.num_samples; ++draw) {
    const std::size_t i = detail::uniform_index(rng, n);
    std::size_t j = detail::uniform_index(rng, n - 1);
    if (j >= i) ++j;
    std::size_t k = detail::uniform_index(rng, n - 2);
    if (k >= std::min(i, j)) ++k;
    if (k >= std::max(i, j)) ++k;
    const auto candidate = detail::plane_through(points[i], points[j], points[k]);
    if (!candidate) continue;
    ++scored;
    // The median can only beat the incumbent if at least half the squared
    // residuals lie below it; otherwise skip the selection.
    std::size_t below = 0;
    for (std::size_t m = 0; m < n; ++m) {
      const double r = candidate->signed_distance(points[m]);
      sq[m] = r * r;
      below += sq[m] < best_score;
    }
    if (below < n / 2) continue;
    const double score = median_inplace(sq);
    if (score < best_score) {
      best_score = score;
      best = *candidate;
    }
  }
  if (!best) {
    throw Error(Errc::DegenerateGeometry, "every sampled triplet was collinear");
  }

  // Robust scale with finite-sample correction; the floor keeps exact data
  // from collapsing the band below floating-point residuals.
  const double correction = 1.0 + 5.0 / static_cast<double>(std::max<std::size_t>(n - 3, 1));
  const double sigma = 1.4826 * correction * std::sqrt(best_score);
  const double band = std::max(cfg.inlier_k * sigma, 1e-9 * detail::point_spread(points));

  LmedsFit fit;
  fit.sample_plane = *best;
  fit.median_sq_residual = best_score;
  fit.band = band;
  fit.samples_scored = scored;
  fit.plane = refine_plane_inliers(points, *best, band);
  return fit;
}

inline Plane3 fit_plane_lmeds(std::span<const Point3> points, const LmedsConfig& cfg) {
  return fit_plane_lmeds_detailed(points, cfg).plane;
}

}  // namespace roadscale
