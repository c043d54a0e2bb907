#pragma once

#include "unwarp/raster.hpp"

namespace unwarp {

/// Pinhole calibration. Camera frame is x right, y down, z forward.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  Vec2 project(const Vec3& p) const;

  /// Throws kInvalidArgument when the invariants do not hold.
  void validate() const;

  bool operator==(const Intrinsics&) const = default;
};

/// Per-pixel depth along the optical axis. A pixel is valid when its depth is
/// finite and strictly positive.
struct DepthMap {
  Raster<double> values;

  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0)
      : values(width, height, fill) {}
  explicit DepthMap(Raster<double> v) : values(std::move(v)) {}

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  bool valid(int x, int y) const;
  double operator()(int x, int y) const { return values(x, y); }
  double& operator()(int x, int y) { return values(x, y); }
};

struct PointGrid {
  Raster<Vec3> points;
  Mask valid;
};

struct NormalMap {
  Raster<Vec3> normals;
  Mask valid;

  int width() const { return normals.width(); }
  int height() const { return normals.height(); }
};

Vec3 backproject(double u, double v, double depth, const Intrinsics& K);

PointGrid backproject_map(const DepthMap& depth, const Intrinsics& K);

/// Unit direction of the ray through pixel (u, v).
Vec3 viewing_ray(const Intrinsics& K, double u, double v);

/// Total-least-squares plane fit over a window x window neighbourhood. Pixels
/// with fewer than kMinNormalSupport valid neighbours are flagged invalid.
/// Normals are oriented so that n . ray < 0. Rows are processed independently
/// and may be spread over `threads` workers without changing the result.
NormalMap estimate_normals(const PointGrid& points, const Intrinsics& K,
                           int window = 5, int threads = 1);

inline constexpr int kMinNormalSupport = 6;

/// Angle between the reversed viewing ray and a camera-facing normal, degrees.
double incidence_angle(const Vec3& normal, const Vec3& ray);

/// Smallest-eigenvalue eigenvector of a symmetric 3x3 matrix.
Vec3 smallest_eigenvector(const Mat3& sym);
/// Largest-eigenvalue eigenvector of a symmetric 3x3 matrix.
Vec3 principal_eigenvector(const Mat3& sym);

}  // namespace unwarp
