#include "unwarp/rectification.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "unwarp/error.hpp"
#include "unwarp/parallel.hpp"

namespace unwarp {

Homography::Homography(const Mat3& m) : m_(m) {
  if (m_(2, 2) != 0.0) m_ /= m_(2, 2);
}

Vec2 Homography::apply(const Vec2& p) const {
  const Vec3 q = m_ * Vec3(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Eigen::Matrix2d Homography::jacobian(const Vec2& p) const {
  const Vec3 q = m_ * Vec3(p.x(), p.y(), 1.0);
  const double w = q.z();
  Eigen::Matrix2d j;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      j(r, c) = (m_(r, c) * w - q(r) * m_(2, c)) / (w * w);
    }
  }
  return j;
}

Homography operator*(const Homography& a, const Homography& b) {
  return Homography(a.matrix() * b.matrix());
}

Mat3 rectifying_rotation(const Vec3& normal) {
  const Vec3 d = (-normal).normalized();
  const Vec3 ez = Vec3::UnitZ();
  const Vec3 axis = d.cross(ez);
  const double s = axis.norm();
  const double c = d.dot(ez);
  if (s < 1e-15) {
    if (c > 0) return Mat3::Identity();
    fail(ErrorCode::kDegenerate, "rectifying_rotation: normal faces away from the camera");
  }
  return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

namespace {

Mask largest_component(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  Raster<int> comp(w, h, -1);
  std::vector<std::pair<int, int>> stack;
  int best_id = -1;
  std::size_t best_size = 0;
  int id = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y) || comp(x, y) >= 0) continue;
      std::size_t size = 0;
      stack.assign(1, {x, y});
      comp(x, y) = id;
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        ++size;
        constexpr int kDx[4] = {1, -1, 0, 0};
        constexpr int kDy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = px + kDx[k], ny = py + kDy[k];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (!mask(nx, ny) || comp(nx, ny) >= 0) continue;
          comp(nx, ny) = id;
          stack.emplace_back(nx, ny);
        }
      }
      if (size > best_size) {
        best_size = size;
        best_id = id;
      }
      ++id;
    }
  }
  Mask out(w, h, 0);
  if (best_id < 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = comp[i] == best_id;
  return out;
}

}  // namespace

Mask glancing_mask(const Mask& mask, const Vec3& normal, const Intrinsics& K,
                   double max_deg) {
  Mask trimmed(mask.width(), mask.height(), 0);
  const double min_cos = std::cos(max_deg * M_PI / 180.0);
  bool any = false;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      // incidence < max_deg  <=>  -n.r > cos(max_deg)
      if (-normal.dot(viewing_ray(K, x, y)) > min_cos) {
        trimmed(x, y) = 1;
        any = true;
      }
    }
  }
  if (!any) fail(ErrorCode::kEmptyPatch, "glancing_mask: patch fully trimmed");
  return largest_component(trimmed);
}

RectifyingFrame rectifying_homography(const Intrinsics& K, const Mat3& R,
                                      const Mask& mask, int max_output_dim) {
  const Mat3 h0 = K.matrix() * R * K.inverse_matrix();
  const double det = h0.determinant();
  if (!(std::abs(det) > 1e-12)) {
    fail(ErrorCode::kDegenerate, "rectifying_homography: singular base map");
  }
  double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
  double warped_area = 0;
  std::size_t source_area = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const Vec3 q = h0 * Vec3(x, y, 1.0);
      if (!(q.z() > 0)) {
        fail(ErrorCode::kDegenerate, "rectifying_homography: mask crosses the horizon");
      }
      const double u = q.x() / q.z(), v = q.y() / q.z();
      min_x = std::min(min_x, u);
      max_x = std::max(max_x, u);
      min_y = std::min(min_y, v);
      max_y = std::max(max_y, v);
      warped_area += std::abs(det) / (q.z() * q.z() * q.z());
      ++source_area;
    }
  }
  if (source_area == 0) fail(ErrorCode::kEmptyPatch, "rectifying_homography: empty mask");

  double s = std::sqrt(static_cast<double>(source_area) / warped_area);
  const double extent = std::max(max_x - min_x, max_y - min_y);
  if (extent > 0 && std::ceil(s * extent) + 1 > max_output_dim) {
    s = (max_output_dim - 1) / extent;
  }
  Mat3 sim;
  sim << s, 0, -s * min_x, 0, s, -s * min_y, 0, 0, 1;
  RectifyingFrame frame;
  frame.H = Homography(sim * h0);
  frame.scale = s;
  frame.width = static_cast<int>(std::ceil(s * (max_x - min_x) - 1e-9)) + 1;
  frame.height = static_cast<int>(std::ceil(s * (max_y - min_y) - 1e-9)) + 1;
  frame.width = std::min(frame.width, max_output_dim);
  frame.height = std::min(frame.height, max_output_dim);
  return frame;
}

WarpedRaster warp_patch(const Image& image, const Mask* source_mask,
                        const Homography& H, int width, int height) {
  const Mat3 inv = H.inverse().matrix();
  WarpedRaster out{Image(width, height, 0.0f), Mask(width, height, 0)};
  const double max_x = image.width() - 1, max_y = image.height() - 1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 q = inv * Vec3(x, y, 1.0);
      if (!(q.z() > 0)) continue;
      const double sx = q.x() / q.z(), sy = q.y() / q.z();
      if (!(sx >= 0 && sy >= 0 && sx <= max_x && sy <= max_y)) continue;
      if (source_mask) {
        const int rx = static_cast<int>(std::lround(sx));
        const int ry = static_cast<int>(std::lround(sy));
        if (!(*source_mask)(rx, ry)) continue;
      }
      out.image(x, y) = sample_bilinear(image, sx, sy);
      out.valid(x, y) = 1;
    }
  }
  return out;
}

std::pair<std::vector<Keypoint>, std::vector<int>> backwarp_keypoints(
    const std::vector<Keypoint>& keypoints, const Homography& H,
    int image_width, int image_height, bool transport_shape) {
  const Homography inv = H.inverse();
  std::vector<Keypoint> out;
  std::vector<int> kept;
  out.reserve(keypoints.size());
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Keypoint& kp = keypoints[i];
    const Vec2 p(kp.x, kp.y);
    const Vec2 q = inv.apply(p);
    if (!q.allFinite() || q.x() < 0 || q.y() < 0 || q.x() > image_width - 1 ||
        q.y() > image_height - 1) {
      continue;
    }
    Keypoint mapped = kp;
    mapped.x = q.x();
    mapped.y = q.y();
    if (transport_shape) {
      const Eigen::Matrix2d j = inv.jacobian(p);
      mapped.scale = kp.scale * std::sqrt(std::abs(j.determinant()));
      const Eigen::Vector2d dir =
          j * Eigen::Vector2d(std::cos(kp.orientation), std::sin(kp.orientation));
      mapped.orientation = std::atan2(dir.y(), dir.x());
    }
    out.push_back(mapped);
    kept.push_back(static_cast<int>(i));
  }
  return {std::move(out), std::move(kept)};
}

RectifiedSet rectify_image(const Image& image, const DepthMap& depth,
                           const Intrinsics& K, const RectifyConfig& config) {
  K.validate();
  if (!image.same_shape(K.width, K.height)) {
    fail(ErrorCode::kDimensionMismatch, "rectify_image: image does not match intrinsics");
  }
  RectifiedSet set;
  set.normals = estimate_normals(backproject_map(depth, K), K,
                                 config.normal_window, config.threads);

  if (config.clustering == ClusteringMode::kOrthogonal) {
    auto clustering = cluster_normals_orthogonal(set.normals, config.orthogonal);
    set.assignment = std::move(clustering.assignment);
    if (!clustering.frame.empty) {
      for (int j = 0; j < 3; ++j) set.axes.push_back(clustering.frame.axes.col(j));
    }
  } else {
    auto clustering = cluster_normals_histogram(set.normals, config.histogram);
    set.assignment = std::move(clustering.assignment);
    set.axes = std::move(clustering.axes);
  }

  const auto min_pixels = static_cast<std::size_t>(
      std::ceil(config.min_patch_frac * K.width * K.height));
  auto patches = connected_components(set.assignment, std::max<std::size_t>(min_pixels, 1));
  if (config.fill_holes) fill_patch_holes(patches);

  std::vector<std::optional<RectifiedPatch>> slots(patches.size());
  const double gate_cos = std::cos(config.ground_gate_deg * M_PI / 180.0);
  parallel_for(patches.size(), config.threads, [&](std::size_t i) {
    PlanarPatch& patch = patches[i];
    patch.normal = refine_patch_normal(patch.mask, set.normals, K);
    if (config.ground_axis &&
        std::abs(patch.normal.dot(config.ground_axis->normalized())) < gate_cos) {
      return;
    }
    Mask trimmed;
    try {
      trimmed = glancing_mask(patch.mask, patch.normal, K, config.glancing_max_deg);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kEmptyPatch) return;
      throw;
    }
    const std::size_t count = count_set(trimmed);
    if (count < min_pixels) return;

    RectifiedPatch out;
    out.source = patch;
    out.source.mask = std::move(trimmed);
    out.source.pixel_count = count;
    out.source.box = bounding_box(out.source.mask);
    const RectifyingFrame frame = rectifying_homography(
        K, rectifying_rotation(patch.normal), out.source.mask, config.max_output_dim);
    out.H = frame.H;
    out.width = frame.width;
    out.height = frame.height;
    out.scale = frame.scale;
    auto warped = warp_patch(image, &out.source.mask, out.H, out.width, out.height);
    out.raster = std::move(warped.image);
    out.valid = std::move(warped.valid);
    slots[i] = std::move(out);
  });

  set.non_planar = Mask(K.width, K.height, 1);
  for (auto& slot : slots) {
    if (!slot) continue;
    const Mask& m = slot->source.mask;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i]) set.non_planar[i] = 0;
    }
    set.patches.push_back(std::move(*slot));
  }
  return set;
}

}  // namespace unwarp
