#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unwarp/geometry.hpp"
#include "unwarp/manifest.hpp"
#include "unwarp/raster.hpp"
#include "unwarp/rectification.hpp"

namespace unwarp {

/// Seeded procedural texture in plane coordinates (metres): checker cells with
/// a random grey level each, softened edges, and two octaves of value noise.
struct Texture {
  double period = 0.25;
  double noise_amplitude = 0.12;
  std::uint64_t seed = 1;

  /// Intensity in [0, 1].
  double sample(double s, double t) const;
};

/// Rectangle origin + s * axis_u + t * axis_v with |s| <= width/2, |t| <= height/2.
struct ScenePlane {
  Vec3 origin = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double width = 1.0;
  double height = 1.0;
  Texture texture;

  Vec3 normal() const { return axis_u.cross(axis_v); }
  /// Throws kInvalidArgument unless the axes are orthonormal and extent positive.
  void validate() const;
};

struct Scene {
  std::vector<ScenePlane> planes;
};

/// World-to-camera rotation and camera centre: X_cam = R (X_world - center).
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  Vec3 to_camera(const Vec3& X) const { return R * (X - center); }
};

/// Camera at `eye` looking at `target`, no roll with respect to `up`.
/// Throws kDegenerate when the viewing direction is parallel to `up`.
CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Relative motion X_b = R X_a + t between two poses.
struct RelativeMotion {
  Mat3 R;
  Vec3 t;
};
RelativeMotion relative_motion(const CameraPose& a, const CameraPose& b);

struct RenderOptions {
  double background = 0.5;
  /// Multiplicative Gaussian depth noise, sigma as a fraction of depth.
  double depth_noise = 0.0;
  /// Gaussian smoothing (pixels) of the noise field before it is rescaled to
  /// unit variance; 0 gives independent per-pixel noise.
  double noise_correlation_px = 0.0;
  std::uint64_t noise_seed = 0;
};

struct RenderedView {
  Image image;
  DepthMap depth;
  Raster<std::int32_t> plane_id;  // -1 for background
};

/// Point-sampled ray casting with nearest-hit visibility.
RenderedView render_view(const Scene& scene, const CameraPose& pose, const Intrinsics& K,
                         const RenderOptions& options = {});

/// Plane-induced homography from view-1 to view-2 pixels. Throws kDegenerate
/// when either camera centre lies in the plane.
Homography gt_plane_homography(const ScenePlane& plane, const CameraPose& pose1,
                               const CameraPose& pose2, const Intrinsics& K1,
                               const Intrinsics& K2);

enum class Layout { kSinglePlane, kTwoOrthogonal, kGroundPlusWall, kOppositeGround };

std::string to_string(Layout layout);
/// Throws kInvalidArgument for unknown names.
Layout parse_layout(const std::string& name);

struct SynthOptions {
  int width = 320;
  int height = 240;
  double focal = 260.0;
  double depth_noise = 0.0;
  double noise_correlation_px = 8.0;
};

struct TwoViewCase {
  Scene scene;
  Intrinsics K_a, K_b;
  CameraPose pose_a, pose_b;
  RenderedView view_a, view_b;
  Mat3 R_ab = Mat3::Identity();
  Vec3 t_ab = Vec3::Zero();  // unit, or zero for coincident centres
  /// One per scene plane, A -> B pixels; empty when the plane is edge-on.
  std::vector<std::optional<Homography>> homographies;
};

/// Two cameras at the same elevation and distance from a target on the
/// ground, `sep_deg` apart in azimuth, so the relative rotation magnitude is
/// exactly `sep_deg`. For kOppositeGround the cameras face each other along a
/// road strip (180 degrees about the vertical, `sep_deg` ignored).
TwoViewCase two_view_case(double sep_deg, double distance, Layout layout, std::uint64_t seed,
                          const SynthOptions& options = {});

/// Parameters of one generated pair.
struct CaseSpec {
  std::string id;
  double sep_deg = 0;
  double distance = 3;
  Layout layout = Layout::kSinglePlane;
  std::uint64_t seed = 0;
};

/// `per_bin` cases in each of the 18 ten-degree separation bins, kept 0.5
/// degrees clear of the bin edges and alternating the layouts given.
std::vector<CaseSpec> campaign_plan(int per_bin, std::uint64_t seed,
                                    const std::vector<Layout>& layouts = {
                                        Layout::kSinglePlane, Layout::kTwoOrthogonal});

/// Writes images (PNG), depths (PFM) and returns the manifest entry.
PairManifestEntry write_case(const TwoViewCase& c, const std::filesystem::path& dir,
                             const std::string& id, const std::string& scene);

/// Opposite-view relocalisation set along a textured road: database view i
/// looks along +x at site i, query i looks back along -x at the same site.
struct RelocalizationScenario {
  Intrinsics K;
  std::vector<RenderedView> queries;
  std::vector<RenderedView> database;
  std::vector<CameraPose> query_poses;
  std::vector<CameraPose> database_poses;
  /// Camera-frame ground normal for the nominal camera pitch.
  Vec3 ground_axis = Vec3::Zero();
};

RelocalizationScenario opposite_ground_scenario(int count, std::uint64_t seed,
                                                const SynthOptions& options = {});

}  // namespace unwarp
