#include "unwarp/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "unwarp/error.hpp"
#include "unwarp/parallel.hpp"

namespace unwarp {

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Mat3 Intrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return k;
}

Vec2 Intrinsics::project(const Vec3& p) const {
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    fail(ErrorCode::kInvalidArgument, "intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::kInvalidArgument, "intrinsics: image size must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    fail(ErrorCode::kInvalidArgument, "intrinsics: principal point must be finite");
  }
}

bool DepthMap::valid(int x, int y) const {
  const double d = values(x, y);
  return std::isfinite(d) && d > 0.0;
}

Vec3 backproject(double u, double v, double depth, const Intrinsics& K) {
  if (!std::isfinite(depth) || !(depth > 0.0)) {
    fail(ErrorCode::kInvalidDepth, "backproject: depth must be finite and > 0");
  }
  return {depth * (u - K.cx) / K.fx, depth * (v - K.cy) / K.fy, depth};
}

PointGrid backproject_map(const DepthMap& depth, const Intrinsics& K) {
  if (depth.width() != K.width || depth.height() != K.height) {
    fail(ErrorCode::kDimensionMismatch,
         "backproject_map: depth is " + std::to_string(depth.width()) + "x" +
             std::to_string(depth.height()) + ", intrinsics expect " +
             std::to_string(K.width) + "x" + std::to_string(K.height));
  }
  PointGrid grid{Raster<Vec3>(K.width, K.height, Vec3::Zero()),
                 Mask(K.width, K.height, 0)};
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      if (!depth.valid(x, y)) continue;
      grid.points(x, y) = backproject(x, y, depth(x, y), K);
      grid.valid(x, y) = 1;
    }
  }
  return grid;
}

Vec3 viewing_ray(const Intrinsics& K, double u, double v) {
  return Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0).normalized();
}

Vec3 smallest_eigenvector(const Mat3& sym) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  solver.computeDirect(sym);
  return solver.eigenvectors().col(0).normalized();
}

Vec3 principal_eigenvector(const Mat3& sym) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(sym);
  return solver.eigenvectors().col(2).normalized();
}

NormalMap estimate_normals(const PointGrid& points, const Intrinsics& K,
                           int window, int threads) {
  if (window < 3 || window % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "estimate_normals: window must be odd and >= 3");
  }
  const int w = points.points.width(), h = points.points.height();
  const int r = window / 2;
  NormalMap out{Raster<Vec3>(w, h, Vec3::Zero()), Mask(w, h, 0)};

  parallel_for(static_cast<std::size_t>(h), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(window) * window);
    for (int x = 0; x < w; ++x) {
      pts.clear();
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || !points.valid(xx, yy)) continue;
          pts.push_back(points.points(xx, yy));
        }
      }
      if (static_cast<int>(pts.size()) < kMinNormalSupport) continue;

      Vec3 centroid = Vec3::Zero();
      for (const auto& p : pts) centroid += p;
      centroid /= static_cast<double>(pts.size());
      Mat3 cov = Mat3::Zero();
      for (const auto& p : pts) {
        const Vec3 d = p - centroid;
        cov.noalias() += d * d.transpose();
      }
      // Normalising keeps the closed-form solver well scaled for any depth unit.
      const double trace = cov.trace();
      if (!(trace > 0.0)) continue;
      Vec3 n = smallest_eigenvector(cov / trace);
      const Vec3 ray = viewing_ray(K, x, y);
      const double facing = n.dot(ray);
      if (facing == 0.0 || !n.allFinite()) continue;
      if (facing > 0) n = -n;
      out.normals(x, y) = n;
      out.valid(x, y) = 1;
    }
  });
  return out;
}

double incidence_angle(const Vec3& normal, const Vec3& ray) {
  const double c = normal.dot(ray);
  if (!(c < 0.0)) {
    fail(ErrorCode::kOrientation, "incidence_angle: normal does not face the camera");
  }
  return std::acos(std::min(1.0, -c)) * 180.0 / M_PI;
}

}  // namespace unwarp
