#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unwarp/config.hpp"
#include "unwarp/features.hpp"
#include "unwarp/geometry.hpp"
#include "unwarp/manifest.hpp"
#include "unwarp/robust_estimation.hpp"

namespace unwarp {

inline constexpr int kNumBins = 18;

enum class PairMode { kRectified, kPlain };
std::string to_string(PairMode mode);
PairMode parse_pair_mode(const std::string& name);

/// Rotation magnitude (axis-angle norm) in degrees.
double rotation_angle_deg(const Mat3& R);

/// floor(angle / 10) clamped to [0, 17].
int difficulty_bin(const Mat3& R);
int difficulty_bin_from_angle(double angle_deg);

/// A loaded pair; `scene` and `id` are carried into the results.
struct PairData {
  std::string id;
  std::string scene;
  Image image_a, image_b;
  DepthMap depth_a, depth_b;
  Intrinsics K_a, K_b;
  Mat3 R_ab = Mat3::Identity();
  Vec3 t_ab = Vec3::Zero();
};

PairData load_pair(const PairManifestEntry& entry);

struct PairResult {
  std::string id;
  std::string scene;
  PairMode mode = PairMode::kRectified;
  double gt_angle_deg = 0;
  int bin = 0;
  std::size_t features_a = 0;
  std::size_t features_b = 0;
  std::size_t raw_matches = 0;
  std::size_t inliers = 0;
  std::string model;  // "essential" or "homography" when a pose was found
  std::optional<RelativePose> pose;
  std::optional<double> rotation_error_deg;
  bool success = false;
  /// Empty on success of every stage; otherwise load, rectify, extract,
  /// match, estimate or pose.
  std::string failed_stage;
  std::string failure;
};

/// Features for one image in the given mode. Plain mode runs the extractor
/// over the whole image; rectified mode unwarps the planar patches first.
FeatureSet extract_features(const Image& image, const DepthMap& depth, const Intrinsics& K,
                            const RunConfig& config, PairMode mode, NormalMap* normals = nullptr);

/// Never throws on per-pair failures; they are recorded in the result.
PairResult evaluate_pair(const PairData& pair, const RunConfig& config, PairMode mode,
                         std::uint64_t pair_seed);

/// Pair seeds are derived from `seed` and the pair id, so results do not
/// depend on thread count or on the mode. Output order follows the input.
std::vector<PairResult> evaluate_pairs(const std::vector<PairData>& pairs, const RunConfig& config,
                                       PairMode mode, std::uint64_t seed);

/// Loads each pair lazily; unreadable files yield a result failed at "load".
std::vector<PairResult> evaluate_pairs(const Manifest& manifest, const RunConfig& config,
                                       PairMode mode, std::uint64_t seed);

struct BinRate {
  std::size_t count = 0;
  std::size_t localized = 0;
  double rate = 0;  // meaningful only when !empty
  bool empty = true;
};

struct BinRates {
  PairMode mode = PairMode::kRectified;
  std::array<BinRate, kNumBins> bins{};
};

/// Aggregates the results whose mode matches `mode`.
BinRates localization_rates(const std::vector<PairResult>& results, PairMode mode);

struct ViewData {
  std::string id;
  Image image;
  DepthMap depth;
  Intrinsics K;
};

ViewData load_view(const ViewManifestEntry& entry);

enum class RelocMode { kHomography, kFundamental };
std::string to_string(RelocMode mode);
RelocMode parse_reloc_mode(const std::string& name);

struct RankedCandidate {
  int database_index = 0;
  std::string id;
  std::size_t inliers = 0;
};

struct RelocResult {
  std::string query_id;
  std::vector<RankedCandidate> ranking;  // most inliers first, ties by index
};

/// Exhaustive query x database matching. Homography mode rectifies (only the
/// patches within the ground gate when `ground_axis` is set) and counts
/// homography inliers; fundamental mode uses plain features and counts
/// fundamental-matrix inliers.
std::vector<RelocResult> relocalize(const std::vector<ViewData>& queries,
                                    const std::vector<ViewData>& database, RelocMode mode,
                                    const RunConfig& config,
                                    const std::optional<Vec3>& ground_axis, std::uint64_t seed);

/// Writes pairs.csv, rates.csv and rates.svg into `dir`.
void emit_report(const std::vector<PairResult>& results, const std::vector<BinRates>& rates,
                 const std::filesystem::path& dir);

std::string pairs_csv(const std::vector<PairResult>& results);
std::string rates_csv(const std::vector<BinRates>& rates);
std::string rates_svg(const std::vector<BinRates>& rates);

/// idx_a, idx_b, distance, inlier
std::string matches_csv(const MatchSet& matches, const std::vector<int>& inliers);

/// query, rank, database, inliers
std::string relocalization_csv(const std::vector<RelocResult>& results);

}  // namespace unwarp
