#pragma once

#include <optional>
#include <vector>

#include "unwarp/geometry.hpp"
#include "unwarp/keypoint.hpp"
#include "unwarp/plane_segmentation.hpp"

namespace unwarp {

/// Maps original homogeneous pixel coordinates to rectified ones.
class Homography {
 public:
  Homography() = default;
  /// Scales so that m(2,2) == 1 when it is non-zero.
  explicit Homography(const Mat3& m);

  static Homography identity() { return Homography(Mat3::Identity()); }

  const Mat3& matrix() const { return m_; }
  Vec2 apply(const Vec2& p) const;
  Homography inverse() const;
  /// Jacobian of the dehomogenised map at p.
  Eigen::Matrix2d jacobian(const Vec2& p) const;

 private:
  Mat3 m_ = Mat3::Identity();
};

Homography operator*(const Homography& a, const Homography& b);

/// Minimal rotation R with R * (-n) = e_z. Throws kDegenerate when -n points
/// straight backwards.
Mat3 rectifying_rotation(const Vec3& normal);

/// Drops pixels seen at more than max_deg incidence against `normal`, then keeps
/// the largest 4-connected component. Throws kEmptyPatch when nothing is left.
Mask glancing_mask(const Mask& mask, const Vec3& normal, const Intrinsics& K,
                   double max_deg = 80.0);

struct RectifyingFrame {
  Homography H;
  int width = 0;
  int height = 0;
  double scale = 1.0;
};

/// K R K^-1 followed by a similarity that preserves the mask area and moves
/// the warped bounding box to the origin, clamped to max_output_dim.
RectifyingFrame rectifying_homography(const Intrinsics& K, const Mat3& R,
                                      const Mask& mask,
                                      int max_output_dim = 4096);

struct WarpedRaster {
  Image image;
  Mask valid;
};

/// Inverse-maps each output pixel and samples bilinearly. Pixels that land
/// outside the image or outside `source_mask` (when given) are invalid.
WarpedRaster warp_patch(const Image& image, const Mask* source_mask,
                        const Homography& H, int width, int height);

/// Maps rectified-frame keypoints back to the original frame. With
/// transport_shape, scale and orientation follow the local Jacobian of H^-1.
/// Keypoints landing outside [0, width-1] x [0, height-1] are dropped; the
/// second element lists the surviving input indices.
std::pair<std::vector<Keypoint>, std::vector<int>> backwarp_keypoints(
    const std::vector<Keypoint>& keypoints, const Homography& H,
    int image_width, int image_height, bool transport_shape = true);

enum class ClusteringMode { kOrthogonal, kHistogram };

struct RectifyConfig {
  int normal_window = 5;
  ClusteringMode clustering = ClusteringMode::kOrthogonal;
  OrthogonalClusterOptions orthogonal;
  HistogramClusterOptions histogram;
  double min_patch_frac = 0.005;
  double glancing_max_deg = 80.0;
  int max_output_dim = 4096;
  bool fill_holes = true;
  /// When set, only patches whose normal lies within ground_gate_deg of this
  /// camera-frame axis are rectified.
  std::optional<Vec3> ground_axis;
  double ground_gate_deg = 25.0;
  int threads = 1;
};

struct RectifiedPatch {
  PlanarPatch source;  // source.mask is the glancing-trimmed mask
  Homography H;
  int width = 0;
  int height = 0;
  double scale = 1.0;
  Image raster;
  Mask valid;
};

struct RectifiedSet {
  std::vector<RectifiedPatch> patches;
  Mask non_planar;
  NormalMap normals;
  AssignmentMap assignment;
  std::vector<Vec3> axes;
};

RectifiedSet rectify_image(const Image& image, const DepthMap& depth,
                           const Intrinsics& K, const RectifyConfig& config);

}  // namespace unwarp
