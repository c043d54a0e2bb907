#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "unwarp/features.hpp"
#include "unwarp/rectification.hpp"
#include "unwarp/robust_estimation.hpp"

namespace unwarp {

/// Every pipeline tunable. The JSON form uses the field names below.
struct RunConfig {
  int normal_window = 5;
  int clusters = 3;
  double assign_deg = 30.0;
  double glancing_deg = 80.0;
  double min_patch_frac = 0.005;
  int max_output_dim = 4096;
  double ratio = 0.8;
  bool mutual = false;
  double homography_px = 10.0;
  double sampson_px = 2.0;
  double success_deg = 5.0;
  std::uint64_t seed = 0;
  std::string clustering = "orthogonal";  // or "histogram"
  std::string extractor = "reference";    // or "reference_binary"
  int max_features = 1000;
  double ground_gate_deg = 25.0;
  std::optional<Vec3> ground_axis;
  double planar_ratio = 0.8;
  double confidence = 0.999;
  int max_iters = 10000;
  int threads = 1;

  /// Throws kValidation naming the offending field.
  void validate() const;

  RectifyConfig rectify_config() const;
  ReferenceParams reference_params() const;
  TwoViewOptions two_view_options(std::uint64_t pair_seed) const;
  RansacOptions homography_options(std::uint64_t pair_seed) const;
  RansacOptions fundamental_options(std::uint64_t pair_seed) const;

  bool operator==(const RunConfig&) const = default;
};

/// Pretty-printed JSON with every field.
std::string to_json(const RunConfig& config);

/// Overrides fields of `base` with those present in `text`. Unknown keys and
/// wrong types throw kParse; the result is not validated.
RunConfig config_from_json(const std::string& text, const RunConfig& base = {});

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

}  // namespace unwarp
