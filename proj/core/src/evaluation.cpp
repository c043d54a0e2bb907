#include "unwarp/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "unwarp/error.hpp"
#include "unwarp/image_io.hpp"
#include "unwarp/parallel.hpp"
#include "unwarp/rectification.hpp"

namespace unwarp {
namespace {

// Dominant normal (axial mean) of the valid normals under the given pixels.
std::optional<Vec3> dominant_normal(const NormalMap& normals, const std::vector<Vec2>& pixels) {
  Mat3 S = Mat3::Zero();
  int n = 0;
  for (const auto& p : pixels) {
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    if (!normals.valid.contains(x, y) || !normals.valid(x, y)) continue;
    const Vec3& v = normals.normals(x, y);
    S.noalias() += v * v.transpose();
    ++n;
  }
  if (n < 3) return std::nullopt;
  return principal_eigenvector(S);
}

RunConfig single_threaded(const RunConfig& c) {
  RunConfig out = c;
  out.threads = 1;
  return out;
}

}  // namespace

std::string to_string(PairMode mode) {
  return mode == PairMode::kRectified ? "rectified" : "plain";
}

PairMode parse_pair_mode(const std::string& name) {
  if (name == "rectified") return PairMode::kRectified;
  if (name == "plain") return PairMode::kPlain;
  fail(ErrorCode::kInvalidArgument, "unknown mode '" + name + "' (rectified or plain)");
}

std::string to_string(RelocMode mode) {
  return mode == RelocMode::kHomography ? "homography" : "fundamental";
}

RelocMode parse_reloc_mode(const std::string& name) {
  if (name == "homography") return RelocMode::kHomography;
  if (name == "fundamental") return RelocMode::kFundamental;
  fail(ErrorCode::kInvalidArgument, "unknown mode '" + name + "' (homography or fundamental)");
}

double rotation_angle_deg(const Mat3& R) { return rotation_error_deg(R, Mat3::Identity()); }

int difficulty_bin_from_angle(double angle_deg) {
  const int k = static_cast<int>(std::floor(angle_deg / 10.0));
  return std::clamp(k, 0, kNumBins - 1);
}

int difficulty_bin(const Mat3& R) { return difficulty_bin_from_angle(rotation_angle_deg(R)); }

PairData load_pair(const PairManifestEntry& e) {
  PairData p;
  p.id = e.id;
  p.scene = e.scene;
  p.image_a = read_png_gray(e.img_a);
  p.image_b = read_png_gray(e.img_b);
  p.depth_a = read_depth(e.depth_a, e.depth_scale);
  p.depth_b = read_depth(e.depth_b, e.depth_scale);
  p.K_a = e.K_a;
  p.K_b = e.K_b;
  p.R_ab = e.rotation();
  p.t_ab = e.t_ab;
  if (!p.image_a.same_shape(e.K_a.width, e.K_a.height) ||
      !p.image_b.same_shape(e.K_b.width, e.K_b.height) ||
      !p.depth_a.values.same_shape(p.image_a) || !p.depth_b.values.same_shape(p.image_b))
    fail(ErrorCode::kDimensionMismatch, "pair '" + e.id + "': image, depth and intrinsics disagree");
  return p;
}

ViewData load_view(const ViewManifestEntry& e) {
  ViewData v;
  v.id = e.id;
  v.image = read_png_gray(e.img);
  v.depth = read_depth(e.depth, e.depth_scale);
  v.K = e.K;
  if (!v.image.same_shape(e.K.width, e.K.height) || !v.depth.values.same_shape(v.image))
    fail(ErrorCode::kDimensionMismatch, "view '" + e.id + "': image, depth and intrinsics disagree");
  return v;
}

FeatureSet extract_features(const Image& image, const DepthMap& depth, const Intrinsics& K,
                            const RunConfig& config, PairMode mode, NormalMap* normals) {
  const auto extractor = make_extractor(config.extractor, config.reference_params());
  if (mode == PairMode::kRectified) {
    const RectifiedSet set = rectify_image(image, depth, K, config.rectify_config());
    if (normals) *normals = set.normals;
    return extract_rectified_features(image, set, *extractor, true, config.threads);
  }
  if (normals) *normals = estimate_normals(backproject_map(depth, K), K, config.normal_window);
  return detect_and_describe(image, Mask(image.width(), image.height(), 1), *extractor);
}

PairResult evaluate_pair(const PairData& pair, const RunConfig& config, PairMode mode,
                         std::uint64_t pair_seed) {
  PairResult r;
  r.id = pair.id;
  r.scene = pair.scene;
  r.mode = mode;
  std::string stage = "load";
  try {
    r.gt_angle_deg = rotation_angle_deg(pair.R_ab);
    r.bin = difficulty_bin_from_angle(r.gt_angle_deg);

    stage = mode == PairMode::kRectified ? "rectify" : "extract";
    NormalMap normals_a;
    const FeatureSet fa =
        extract_features(pair.image_a, pair.depth_a, pair.K_a, config, mode, &normals_a);
    const FeatureSet fb = extract_features(pair.image_b, pair.depth_b, pair.K_b, config, mode);
    r.features_a = fa.size();
    r.features_b = fb.size();

    stage = "match";
    const MatchSet matches = match_descriptors(fa, fb, config.ratio, config.mutual);
    r.raw_matches = matches.size();
    if (matches.size() < 8) fail(ErrorCode::kInsufficientData, "fewer than 8 matches");
    const PointPairs pts = gather_points(fa, fb, matches);

    stage = "estimate";
    const auto hint = [&](const std::vector<int>& inliers) {
      std::vector<Vec2> px;
      px.reserve(inliers.size());
      for (int i : inliers) px.push_back(pts.a[i]);
      return dominant_normal(normals_a, px);
    };
    TwoViewEstimate est;
    try {
      est = estimate_two_view_pose(pts, pair.K_a, pair.K_b, config.two_view_options(pair_seed), hint);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kAmbiguousPose) stage = "pose";
      throw;
    }
    r.inliers = est.inliers.size();
    r.model = est.model;
    r.pose = est.pose;
    r.rotation_error_deg = rotation_error_deg(est.pose.R, pair.R_ab);
    r.success = *r.rotation_error_deg < config.success_deg;
  } catch (const Error& e) {
    r.failed_stage = stage;
    r.failure = e.what();
    r.success = false;
  }
  return r;
}

std::vector<PairResult> evaluate_pairs(const std::vector<PairData>& pairs, const RunConfig& config,
                                       PairMode mode, std::uint64_t seed) {
  std::vector<PairResult> out(pairs.size());
  const RunConfig inner = single_threaded(config);
  parallel_for(pairs.size(), config.threads, [&](std::size_t i) {
    out[i] = evaluate_pair(pairs[i], inner, mode, derive_seed(seed, pairs[i].id));
  });
  return out;
}

std::vector<PairResult> evaluate_pairs(const Manifest& manifest, const RunConfig& config,
                                       PairMode mode, std::uint64_t seed) {
  std::vector<PairResult> out(manifest.entries.size());
  const RunConfig inner = single_threaded(config);
  parallel_for(manifest.entries.size(), config.threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    PairData pair;
    try {
      pair = load_pair(e);
    } catch (const Error& ex) {
      PairResult r;
      r.id = e.id;
      r.scene = e.scene;
      r.mode = mode;
      r.gt_angle_deg = rotation_angle_deg(e.rotation());
      r.bin = difficulty_bin_from_angle(r.gt_angle_deg);
      r.failed_stage = "load";
      r.failure = ex.what();
      out[i] = std::move(r);
      return;
    }
    out[i] = evaluate_pair(pair, inner, mode, derive_seed(seed, e.id));
  });
  return out;
}

BinRates localization_rates(const std::vector<PairResult>& results, PairMode mode) {
  BinRates rates;
  rates.mode = mode;
  for (const auto& r : results) {
    if (r.mode != mode) continue;
    auto& b = rates.bins.at(std::clamp(r.bin, 0, kNumBins - 1));
    ++b.count;
    if (r.success) ++b.localized;
  }
  for (auto& b : rates.bins) {
    b.empty = b.count == 0;
    b.rate = b.empty ? 0.0 : static_cast<double>(b.localized) / b.count;
  }
  return rates;
}

std::vector<RelocResult> relocalize(const std::vector<ViewData>& queries,
                                    const std::vector<ViewData>& database, RelocMode mode,
                                    const RunConfig& config,
                                    const std::optional<Vec3>& ground_axis, std::uint64_t seed) {
  if (queries.empty() || database.empty())
    fail(ErrorCode::kInvalidArgument, "relocalize: query and database sets must be nonempty");
  RunConfig inner = single_threaded(config);
  if (ground_axis) inner.ground_axis = ground_axis;
  const PairMode feature_mode = mode == RelocMode::kHomography ? PairMode::kRectified : PairMode::kPlain;

  const auto describe = [&](const std::vector<ViewData>& views) {
    std::vector<FeatureSet> out(views.size());
    parallel_for(views.size(), config.threads, [&](std::size_t i) {
      try {
        out[i] = extract_features(views[i].image, views[i].depth, views[i].K, inner, feature_mode);
      } catch (const Error&) {
        out[i] = FeatureSet{};
      }
    });
    return out;
  };
  const auto fq = describe(queries);
  const auto fd = describe(database);

  std::vector<RelocResult> out(queries.size());
  parallel_for(queries.size(), config.threads, [&](std::size_t q) {
    RelocResult& r = out[q];
    r.query_id = queries[q].id;
    for (std::size_t d = 0; d < database.size(); ++d) {
      RankedCandidate c;
      c.database_index = static_cast<int>(d);
      c.id = database[d].id;
      try {
        if (fq[q].size() > 0 && fd[d].size() > 0) {
          const MatchSet m = match_descriptors(fq[q], fd[d], inner.ratio, inner.mutual);
          const PointPairs pts = gather_points(fq[q], fd[d], m);
          const std::uint64_t s = derive_seed(seed, queries[q].id + "|" + database[d].id);
          if (mode == RelocMode::kHomography && pts.size() >= 4) {
            c.inliers = estimate_homography_ransac(pts, inner.homography_options(s)).inliers.size();
          } else if (mode == RelocMode::kFundamental && pts.size() >= 8) {
            c.inliers = estimate_fundamental_ransac(pts, inner.fundamental_options(s)).inliers.size();
          }
        }
      } catch (const Error&) {
        c.inliers = 0;
      }
      r.ranking.push_back(std::move(c));
    }
    std::stable_sort(r.ranking.begin(), r.ranking.end(),
                     [](const RankedCandidate& a, const RankedCandidate& b) {
                       if (a.inliers != b.inliers) return a.inliers > b.inliers;
                       return a.database_index < b.database_index;
                     });
  });
  return out;
}

}  // namespace unwarp
