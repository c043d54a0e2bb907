#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unwarp/features.hpp"
#include "unwarp/geometry.hpp"
#include "unwarp/rectification.hpp"

namespace unwarp {

struct Match {
  int query = 0;  // index into A
  int train = 0;  // index into B
  double distance = 0;

  bool operator==(const Match&) const = default;
};

using MatchSet = std::vector<Match>;

/// Brute-force nearest / second-nearest search (L2 for float descriptors,
/// Hamming for bits) with the ratio test d1 < ratio * d2.
MatchSet match_descriptors(const FeatureSet& a, const FeatureSet& b,
                           double ratio = 0.8, bool mutual = false);

struct PointPairs {
  std::vector<Vec2> a;
  std::vector<Vec2> b;

  std::size_t size() const { return a.size(); }
  PointPairs subset(std::span<const int> indices) const;
};

PointPairs gather_points(const FeatureSet& a, const FeatureSet& b,
                         const MatchSet& matches);

/// Normalised DLT. Throws kInsufficientData below 4 pairs and kDegenerate for
/// collinear minimal sets or a rank-deficient system.
Homography dlt_homography(std::span<const Vec2> src, std::span<const Vec2> dst);

struct RansacOptions {
  double threshold = 10.0;  // px
  double confidence = 0.999;
  int max_iters = 10000;
  std::uint64_t seed = 0;
};

struct HomographyEstimate {
  Homography H;
  std::vector<int> inliers;  // ascending
};

/// Inlier when both forward and backward transfer errors are within the
/// threshold.
HomographyEstimate estimate_homography_ransac(const PointPairs& pairs,
                                              const RansacOptions& options);

/// Normalised eight-point with rank-2 enforcement, unit Frobenius norm, and
/// x_b^T F x_a = 0. Throws kDegenerate when the linear system has a
/// nullspace of dimension > 1 (e.g. planar or rotation-only input).
Mat3 eight_point_fundamental(std::span<const Vec2> a, std::span<const Vec2> b);

struct EpipolarEstimate {
  Mat3 model;
  std::vector<int> inliers;  // ascending
};

/// Sampson distance of a pair under F.
double sampson_distance(const Mat3& F, const Vec2& a, const Vec2& b);

EpipolarEstimate estimate_fundamental_ransac(const PointPairs& pairs,
                                             const RansacOptions& options);

/// Projects onto the essential manifold: singular values (s, s, 0), unit norm.
Mat3 enforce_essential(const Mat3& E);

/// Eight-point RANSAC on K^-1 normalised points; threshold is a Sampson
/// distance in pixels (normalised residual times the mean focal length).
EpipolarEstimate estimate_essential_ransac(const PointPairs& pairs,
                                           const Intrinsics& Ka,
                                           const Intrinsics& Kb,
                                           const RansacOptions& options);

/// X_b = R X_a + t, with |t| = 1 (or t = 0 for a rotation-only estimate).
struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::UnitZ();
};

/// Four-way decomposition of E, chosen by how many midpoint-triangulated
/// points lie in front of both cameras. Throws kAmbiguousPose on a tie.
RelativePose recover_pose(const Mat3& E, const PointPairs& inliers,
                          const Intrinsics& Ka, const Intrinsics& Kb);

/// Decomposes a plane-induced homography (A -> B pixels). Among the
/// candidates passing cheirality, `normal_hint` (camera-A plane normal,
/// either sign) picks the one with the closest plane normal.
RelativePose recover_pose_from_homography(const Homography& H,
                                          const PointPairs& inliers,
                                          const Intrinsics& Ka,
                                          const Intrinsics& Kb,
                                          const std::optional<Vec3>& normal_hint);

/// Angle of R_est * R_gt^T in degrees.
double rotation_error_deg(const Mat3& R_est, const Mat3& R_gt);

/// Angle between two directions in degrees (sign-sensitive).
double direction_error_deg(const Vec3& a, const Vec3& b);

struct TwoViewOptions {
  double sampson_px = 2.0;
  /// Homography transfer threshold for the planarity check.
  double planar_px = 4.0;
  /// The homography model wins when it keeps this share of the E inliers.
  double planar_ratio = 0.8;
  double confidence = 0.999;
  int max_iters = 10000;
  std::uint64_t seed = 0;
};

struct TwoViewEstimate {
  RelativePose pose;
  std::vector<int> inliers;
  std::string model;  // "essential" or "homography"
};

/// Essential-matrix pose, falling back to homography decomposition when the
/// correspondences are explained by a single plane (where the eight-point
/// system is degenerate).
TwoViewEstimate estimate_two_view_pose(
    const PointPairs& pairs, const Intrinsics& Ka, const Intrinsics& Kb,
    const TwoViewOptions& options,
    const std::function<std::optional<Vec3>(const std::vector<int>&)>& normal_hint = {});

}  // namespace unwarp
