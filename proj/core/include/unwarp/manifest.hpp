#pragma once

#include <Eigen/Geometry>
#include <filesystem>
#include <string>
#include <vector>

#include "unwarp/geometry.hpp"

namespace unwarp {

/// One line of a pair manifest. Paths are resolved against the manifest
/// directory at load time.
struct PairManifestEntry {
  std::string id;
  std::filesystem::path img_a, img_b, depth_a, depth_b;
  Intrinsics K_a, K_b;
  Eigen::Quaterniond q_ab = Eigen::Quaterniond::Identity();  // X_b = R X_a + t
  Vec3 t_ab = Vec3::Zero();
  std::string scene;
  /// Metres per raw unit for 16-bit PNG depth (ignored for PFM).
  double depth_scale = 1000.0;
  int line = 0;

  Mat3 rotation() const { return q_ab.toRotationMatrix(); }
};

struct Manifest {
  std::vector<PairManifestEntry> entries;
  std::vector<std::string> warnings;
};

/// JSON Lines. Blank lines are skipped. Errors name the line (and entry id).
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);

/// Writes entries with paths relative to the manifest directory. Relative
/// entry paths are taken against the working directory.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<PairManifestEntry>& entries);

/// Single-image list used by relocalisation:
/// {"id", "img", "depth", "K", "depth_scale"?} per line.
struct ViewManifestEntry {
  std::string id;
  std::filesystem::path img, depth;
  Intrinsics K;
  double depth_scale = 1000.0;
  int line = 0;
};

std::vector<ViewManifestEntry> load_view_list(const std::filesystem::path& path,
                                              bool check_files = true);
void write_view_list(const std::filesystem::path& path,
                     const std::vector<ViewManifestEntry>& entries);

}  // namespace unwarp
