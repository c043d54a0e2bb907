#include "unwarp/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "unwarp/error.hpp"
#include "unwarp/image_io.hpp"
#include "unwarp/parallel.hpp"

namespace unwarp {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double hash_unit(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i) * 0x9E3779B1ull));
  h = splitmix64(h ^ static_cast<std::uint64_t>(j) * 0x85EBCA77ull);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double a = smoothstep(x - fx);
  const double b = smoothstep(y - fy);
  const double v00 = hash_unit(i, j, seed), v10 = hash_unit(i + 1, j, seed);
  const double v01 = hash_unit(i, j + 1, seed), v11 = hash_unit(i + 1, j + 1, seed);
  return (1 - b) * ((1 - a) * v00 + a * v10) + b * ((1 - a) * v01 + a * v11) - 0.5;
}

// Cell grey level: alternating dark/bright with a random contrast per cell.
double cell_value(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  const double sign = ((i + j) & 1) ? 1.0 : -1.0;
  return 0.5 + sign * (0.08 + 0.3 * hash_unit(i, j, seed));
}

double plane_depth_along(const ScenePlane& p, const Vec3& c, const Vec3& d, double& s,
                         double& t) {
  const Vec3 n = p.normal();
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-12) return -1;
  const double lambda = n.dot(p.origin - c) / denom;
  if (!(lambda > 1e-9)) return -1;
  const Vec3 rel = c + lambda * d - p.origin;
  s = rel.dot(p.axis_u);
  t = rel.dot(p.axis_v);
  if (std::abs(s) > 0.5 * p.width || std::abs(t) > 0.5 * p.height) return -1;
  return lambda;
}

// Unit-variance Gaussian field, optionally smoothed with a separable kernel.
Raster<double> noise_field(int w, int h, double sigma_px, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Raster<double> f(w, h);
  for (auto& v : f.data()) v = gauss(rng);
  if (sigma_px <= 0) return f;
  const int r = static_cast<int>(std::ceil(3 * sigma_px));
  std::vector<double> k(2 * r + 1);
  double norm2 = 0;
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
  for (double v : k) norm2 += v * v;
  for (double& v : k) v /= std::sqrt(norm2);  // unit variance per pass
  const auto pass = [&](const Raster<double>& in, bool horizontal) {
    Raster<double> out(w, h, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          // Mirror at the border so edge pixels keep unit variance.
          int xx = horizontal ? x + i : x, yy = horizontal ? y : y + i;
          const int lim = horizontal ? w : h;
          int& c = horizontal ? xx : yy;
          if (c < 0) c = -c - 1;
          if (c >= lim) c = 2 * lim - c - 1;
          c = std::clamp(c, 0, lim - 1);
          acc += k[i + r] * in(xx, yy);
        }
        out(x, y) = acc;
      }
    return out;
  };
  return pass(pass(f, true), false);
}

Intrinsics make_intrinsics(const SynthOptions& o) {
  Intrinsics K;
  K.fx = K.fy = o.focal;
  K.cx = 0.5 * (o.width - 1);
  K.cy = 0.5 * (o.height - 1);
  K.width = o.width;
  K.height = o.height;
  K.validate();
  return K;
}

ScenePlane ground_plane(double width, double height, const Vec3& centre, std::uint64_t seed) {
  ScenePlane g;
  g.origin = centre;
  g.axis_u = Vec3::UnitX();
  g.axis_v = Vec3::UnitY();
  g.width = width;
  g.height = height;
  g.texture.period = 0.25;
  g.texture.seed = seed;
  return g;
}

ScenePlane vertical_wall(const Vec3& base_centre, const Vec3& facing, double width,
                         double height, std::uint64_t seed) {
  ScenePlane w;
  const Vec3 f = Vec3(facing.x(), facing.y(), 0).normalized();
  w.axis_u = Vec3(-f.y(), f.x(), 0);
  w.axis_v = Vec3::UnitZ();
  w.origin = base_centre + Vec3(0, 0, 0.5 * height);
  w.width = width;
  w.height = height;
  w.texture.period = 0.2;
  w.texture.seed = seed;
  return w;
}

Vec3 orbit(const Vec3& target, double azimuth, double elevation, double distance) {
  return target + distance * Vec3(std::cos(elevation) * std::cos(azimuth),
                                  std::cos(elevation) * std::sin(azimuth),
                                  std::sin(elevation));
}

std::vector<std::optional<Homography>> plane_homographies(const TwoViewCase& c) {
  std::vector<std::optional<Homography>> out;
  for (const auto& p : c.scene.planes) {
    try {
      out.emplace_back(gt_plane_homography(p, c.pose_a, c.pose_b, c.K_a, c.K_b));
    } catch (const Error&) {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

void finish_case(TwoViewCase& c, const SynthOptions& o, std::uint64_t seed) {
  RenderOptions ra;
  ra.depth_noise = o.depth_noise;
  ra.noise_correlation_px = o.noise_correlation_px;
  ra.noise_seed = derive_seed(seed, "noise-a");
  RenderOptions rb = ra;
  rb.noise_seed = derive_seed(seed, "noise-b");
  c.view_a = render_view(c.scene, c.pose_a, c.K_a, ra);
  c.view_b = render_view(c.scene, c.pose_b, c.K_b, rb);
  const RelativeMotion m = relative_motion(c.pose_a, c.pose_b);
  c.R_ab = m.R;
  c.t_ab = m.t.norm() > 1e-12 ? Vec3(m.t.normalized()) : Vec3::Zero();
  c.homographies = plane_homographies(c);
}

constexpr double kSiteSpacing = 25.0;
constexpr double kRoadWidth = 10.0;

struct OppositeSite {
  CameraPose query, database;
};

OppositeSite opposite_site(const Vec3& site, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pitch(40.0 * kDeg, 50.0 * kDeg);
  std::uniform_real_distribution<double> dist(2.5, 3.5);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  std::uniform_real_distribution<double> yaw(-4.0 * kDeg, 4.0 * kDeg);
  OppositeSite s;
  const Vec3 target_db = site + Vec3(jitter(rng), jitter(rng), 0);
  const Vec3 target_q = site + Vec3(jitter(rng), jitter(rng), 0);
  s.database = look_at(orbit(target_db, std::numbers::pi + yaw(rng), pitch(rng), dist(rng)), target_db);
  s.query = look_at(orbit(target_q, yaw(rng), pitch(rng), dist(rng)), target_q);
  return s;
}

Scene road_scene(int sites, std::uint64_t seed) {
  Scene scene;
  const double length = kSiteSpacing * (sites + 1);
  scene.planes.push_back(
      ground_plane(length, kRoadWidth, Vec3(0.5 * kSiteSpacing * (sites - 1), 0, 0), seed));
  return scene;
}

}  // namespace

double Texture::sample(double s, double t) const {
  // Cells are flat with smoothstep transitions of width 2 * edge near borders.
  // Detail stays above ~0.5 period so that point sampling at grazing views
  // does not alias.
  constexpr double edge = 0.15;
  const double u = s / period - 0.5;
  const double v = t / period - 0.5;
  const double fu = std::floor(u), fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu);
  const auto j = static_cast<std::int64_t>(fv);
  const double a = smoothstep((u - fu - (0.5 - edge)) / (2 * edge));
  const double b = smoothstep((v - fv - (0.5 - edge)) / (2 * edge));
  const double c00 = cell_value(i, j, seed), c10 = cell_value(i + 1, j, seed);
  const double c01 = cell_value(i, j + 1, seed), c11 = cell_value(i + 1, j + 1, seed);
  double value = (1 - b) * ((1 - a) * c00 + a * c10) + b * ((1 - a) * c01 + a * c11);
  value += noise_amplitude * value_noise(s / (0.6 * period), t / (0.6 * period), seed ^ 0xA5A5u);
  value += 1.5 * noise_amplitude * value_noise(s / (1.7 * period), t / (1.7 * period), seed ^ 0x5A5Au);
  return std::clamp(value, 0.0, 1.0);
}

void ScenePlane::validate() const {
  const bool ortho = std::abs(axis_u.norm() - 1) < 1e-9 && std::abs(axis_v.norm() - 1) < 1e-9 &&
                     std::abs(axis_u.dot(axis_v)) < 1e-9;
  if (!ortho) fail(ErrorCode::kInvalidArgument, "plane axes must be orthonormal");
  if (!(width > 0) || !(height > 0)) fail(ErrorCode::kInvalidArgument, "plane extent must be positive");
  if (!(texture.period > 0)) fail(ErrorCode::kInvalidArgument, "texture period must be positive");
}

CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 f = target - eye;
  if (!(f.norm() > 0)) fail(ErrorCode::kDegenerate, "look_at: eye equals target");
  const Vec3 fw = f.normalized();
  const Vec3 side = fw.cross(up);
  if (side.norm() < 1e-9) fail(ErrorCode::kDegenerate, "look_at: view direction parallel to up");
  const Vec3 r = side.normalized();
  const Vec3 d = fw.cross(r);
  CameraPose p;
  p.R.row(0) = r;
  p.R.row(1) = d;
  p.R.row(2) = fw;
  p.center = eye;
  return p;
}

RelativeMotion relative_motion(const CameraPose& a, const CameraPose& b) {
  return {b.R * a.R.transpose(), b.R * (a.center - b.center)};
}

RenderedView render_view(const Scene& scene, const CameraPose& pose, const Intrinsics& K,
                         const RenderOptions& options) {
  K.validate();
  if ((pose.R.transpose() * pose.R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(pose.R.determinant() - 1) > 1e-9)
    fail(ErrorCode::kDegenerate, "render_view: pose rotation is not a rotation");
  for (const auto& p : scene.planes) {
    p.validate();
    if (std::abs(p.normal().dot(pose.center - p.origin)) < 1e-9)
      fail(ErrorCode::kDegenerate, "render_view: camera centre lies in a scene plane");
  }
  RenderedView v;
  v.image = Image(K.width, K.height, static_cast<float>(options.background));
  v.depth = DepthMap(K.width, K.height, 0.0);
  v.plane_id = Raster<std::int32_t>(K.width, K.height, -1);
  const Mat3 to_world = pose.R.transpose();
  Raster<double> noise;
  if (options.depth_noise > 0)
    noise = noise_field(K.width, K.height, options.noise_correlation_px, options.noise_seed);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Vec3 d = to_world * Vec3((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int best_id = -1;
      double bs = 0, bt = 0;
      for (std::size_t k = 0; k < scene.planes.size(); ++k) {
        double s = 0, t = 0;
        const double lambda = plane_depth_along(scene.planes[k], pose.center, d, s, t);
        if (lambda > 0 && lambda < best) {
          best = lambda;
          best_id = static_cast<int>(k);
          bs = s;
          bt = t;
        }
      }
      if (best_id < 0) continue;
      v.plane_id(x, y) = best_id;
      v.image(x, y) = static_cast<float>(scene.planes[best_id].texture.sample(bs, bt));
      double depth = best;
      if (options.depth_noise > 0) depth *= std::max(0.05, 1.0 + options.depth_noise * noise(x, y));
      v.depth(x, y) = depth;
    }
  }
  return v;
}

Homography gt_plane_homography(const ScenePlane& plane, const CameraPose& pose1,
                               const CameraPose& pose2, const Intrinsics& K1,
                               const Intrinsics& K2) {
  const Vec3 n1 = pose1.R * plane.normal();
  const double d1 = n1.dot(pose1.to_camera(plane.origin));
  const double d2 = (pose2.R * plane.normal()).dot(pose2.to_camera(plane.origin));
  if (std::abs(d1) < 1e-9 || std::abs(d2) < 1e-9)
    fail(ErrorCode::kDegenerate, "gt_plane_homography: plane is edge-on to a camera");
  const RelativeMotion m = relative_motion(pose1, pose2);
  // X2 = R X1 + t and n1 . X1 = d1 on the plane.
  const Mat3 A = m.R + m.t * n1.transpose() / d1;
  return Homography(K2.matrix() * A * K1.inverse_matrix());
}

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::kSinglePlane: return "single_plane";
    case Layout::kTwoOrthogonal: return "two_orthogonal";
    case Layout::kGroundPlusWall: return "ground_plus_wall";
    case Layout::kOppositeGround: return "opposite_ground";
  }
  return "unknown";
}

Layout parse_layout(const std::string& name) {
  for (Layout l : {Layout::kSinglePlane, Layout::kTwoOrthogonal, Layout::kGroundPlusWall,
                   Layout::kOppositeGround})
    if (to_string(l) == name) return l;
  fail(ErrorCode::kInvalidArgument, "unknown layout '" + name + "'");
}

TwoViewCase two_view_case(double sep_deg, double distance, Layout layout, std::uint64_t seed,
                          const SynthOptions& options) {
  if (!(sep_deg >= 0 && sep_deg < 180)) fail(ErrorCode::kInvalidArgument, "sep must lie in [0, 180)");
  if (!(distance > 0.5 && distance < 100))
    fail(ErrorCode::kInvalidArgument, "distance must lie in (0.5, 100) metres");
  if (!(options.depth_noise >= 0 && options.depth_noise < 0.5))
    fail(ErrorCode::kInvalidArgument, "depth noise must lie in [0, 0.5)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  TwoViewCase c;
  c.K_a = c.K_b = make_intrinsics(options);

  if (layout == Layout::kOppositeGround) {
    c.scene = road_scene(1, derive_seed(seed, "road"));
    const OppositeSite s = opposite_site(Vec3::Zero(), rng);
    c.pose_a = s.database;
    c.pose_b = s.query;
    finish_case(c, options, seed);
    return c;
  }

  const double elevation = (30.0 + 15.0 * uni(rng)) * kDeg;
  const double heading = 2 * std::numbers::pi * uni(rng);
  const Vec3 target(4 * uni(rng) - 2, 4 * uni(rng) - 2, 0);
  const double half = 0.5 * sep_deg * kDeg;
  c.scene.planes.push_back(ground_plane(60, 60, Vec3::Zero(), derive_seed(seed, "ground")));
  if (layout == Layout::kTwoOrthogonal) {
    const Vec3 facing(std::cos(heading), std::sin(heading), 0);
    const double offset = 0.4 + 0.6 * uni(rng);
    c.scene.planes.push_back(
        vertical_wall(target - offset * facing, facing, 8.0, 3.0, derive_seed(seed, "wall")));
  } else if (layout == Layout::kGroundPlusWall) {
    c.scene.planes.push_back(
        vertical_wall(Vec3(-4, 0, 0), Vec3::UnitX(), 12.0, 3.0, derive_seed(seed, "wall")));
  }
  c.pose_a = look_at(orbit(target, heading - half, elevation, distance), target);
  c.pose_b = look_at(orbit(target, heading + half, elevation, distance), target);
  finish_case(c, options, seed);
  return c;
}

std::vector<CaseSpec> campaign_plan(int per_bin, std::uint64_t seed,
                                    const std::vector<Layout>& layouts) {
  if (per_bin < 1) fail(ErrorCode::kInvalidArgument, "campaign needs at least one pair per bin");
  if (layouts.empty()) fail(ErrorCode::kInvalidArgument, "campaign needs at least one layout");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<CaseSpec> plan;
  for (int k = 0; k < 18; ++k) {
    for (int i = 0; i < per_bin; ++i) {
      CaseSpec c;
      char id[32];
      std::snprintf(id, sizeof id, "b%02d_%03d", k, i);
      c.id = id;
      c.sep_deg = 10.0 * k + 0.5 + 9.0 * uni(rng);
      c.distance = 2.5 + 1.5 * uni(rng);
      c.layout = layouts[i % layouts.size()];
      c.seed = derive_seed(seed, c.id);
      plan.push_back(std::move(c));
    }
  }
  return plan;
}

PairManifestEntry write_case(const TwoViewCase& c, const std::filesystem::path& dir,
                             const std::string& id, const std::string& scene) {
  std::filesystem::create_directories(dir);
  PairManifestEntry e;
  e.id = id;
  e.scene = scene;
  e.img_a = dir / (id + "_a.png");
  e.img_b = dir / (id + "_b.png");
  e.depth_a = dir / (id + "_a.pfm");
  e.depth_b = dir / (id + "_b.pfm");
  write_png_gray(e.img_a, c.view_a.image);
  write_png_gray(e.img_b, c.view_b.image);
  write_pfm(e.depth_a, c.view_a.depth);
  write_pfm(e.depth_b, c.view_b.depth);
  e.K_a = c.K_a;
  e.K_b = c.K_b;
  e.q_ab = Eigen::Quaterniond(c.R_ab).normalized();
  e.t_ab = c.t_ab;
  return e;
}

RelocalizationScenario opposite_ground_scenario(int count, std::uint64_t seed,
                                                const SynthOptions& options) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "scenario needs at least one site");
  RelocalizationScenario sc;
  sc.K = make_intrinsics(options);
  const Scene scene = road_scene(count, derive_seed(seed, "road"));
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const OppositeSite s = opposite_site(Vec3(kSiteSpacing * i, 0, 0), rng);
    sc.query_poses.push_back(s.query);
    sc.database_poses.push_back(s.database);
  }
  sc.queries.resize(count);
  sc.database.resize(count);
  for (int i = 0; i < count; ++i) {
    RenderOptions r;
    r.depth_noise = options.depth_noise;
    r.noise_correlation_px = options.noise_correlation_px;
    r.noise_seed = derive_seed(seed, "q" + std::to_string(i));
    sc.queries[i] = render_view(scene, sc.query_poses[i], sc.K, r);
    r.noise_seed = derive_seed(seed, "d" + std::to_string(i));
    sc.database[i] = render_view(scene, sc.database_poses[i], sc.K, r);
  }
  // World up seen by a camera pitched down by the mid-range angle.
  const double pitch = 45.0 * kDeg;
  sc.ground_axis = Vec3(0, -std::cos(pitch), -std::sin(pitch));
  return sc;
}

}  // namespace unwarp
