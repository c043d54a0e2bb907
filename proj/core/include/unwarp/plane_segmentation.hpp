#pragma once

#include <cstdint>
#include <vector>

#include "unwarp/geometry.hpp"

namespace unwarp {

/// Three mutually orthogonal axial directions, stored as the columns of a
/// rotation matrix. Each column stands for both +c and -c.
struct OrthogonalFrame {
  Mat3 axes = Mat3::Identity();
  bool empty = true;
};

/// Per-pixel label: 0 = none, k >= 1 = k-th axis (1-based).
struct AssignmentMap {
  Raster<std::uint8_t> labels;

  int width() const { return labels.width(); }
  int height() const { return labels.height(); }
};

struct OrthogonalClustering {
  OrthogonalFrame frame;
  AssignmentMap assignment;
  int iterations = 0;
};

struct HistogramClustering {
  std::vector<Vec3> axes;
  AssignmentMap assignment;
};

struct OrthogonalClusterOptions {
  double assign_deg = 30.0;
  int max_iters = 50;
  int stride = 2;
};

struct HistogramClusterOptions {
  int bins = 200;
  double threshold_frac = 0.05;
  double nms_deg = 20.0;
  double assign_deg = 30.0;
  int max_axes = 3;
};

inline constexpr std::size_t kMinClusterNormals = 100;

/// Axial k-means with k = 3 and the axes constrained to stay orthogonal.
/// Fewer than kMinClusterNormals valid normals gives an empty frame.
OrthogonalClustering cluster_normals_orthogonal(
    const NormalMap& normals, const OrthogonalClusterOptions& options = {});

/// Hemisphere histogram (Fibonacci lattice), thresholding and angular
/// non-maximum suppression.
HistogramClustering cluster_normals_histogram(
    const NormalMap& normals, const HistogramClusterOptions& options = {});

/// Centres of an n-cell near-equal-area partition of the z >= 0 hemisphere.
std::vector<Vec3> fibonacci_hemisphere(int n);

/// Labels every valid normal with the closest axis (axially) when within
/// assign_deg; otherwise 0.
AssignmentMap assign_to_axes(const NormalMap& normals,
                             const std::vector<Vec3>& axes, double assign_deg);

struct PixelBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
};

struct PlanarPatch {
  Mask mask;  // full image size
  int label = 0;
  std::size_t pixel_count = 0;
  Vec3 normal = Vec3::Zero();
  PixelBox box;
  int seed_x = 0, seed_y = 0;  // first mask pixel in row-major order
};

/// 4-connected components per label, smallest dropped. Ordered by label, then
/// by the row-major position of the first pixel.
std::vector<PlanarPatch> connected_components(const AssignmentMap& assign,
                                              std::size_t min_patch_pixels);

/// Fills enclosed holes of each patch with pixels no other patch owns.
void fill_patch_holes(std::vector<PlanarPatch>& patches);

/// Principal direction of the member normals, camera-facing at the centroid.
Vec3 refine_patch_normal(const Mask& mask, const NormalMap& normals,
                         const Intrinsics& K);

PixelBox bounding_box(const Mask& mask);
Vec2 mask_centroid(const Mask& mask);

}  // namespace unwarp
