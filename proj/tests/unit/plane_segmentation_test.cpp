#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "unwarp/error.hpp"
#include "unwarp/plane_segmentation.hpp"
#include "unwarp/synthetic.hpp"

namespace unwarp {
namespace {

using testing::deg;

NormalMap map_from(const std::vector<Vec3>& normals, int width) {
  const int height = static_cast<int>((normals.size() + width - 1) / width);
  NormalMap m{Raster<Vec3>(width, height, Vec3::Zero()), Mask(width, height, 0)};
  for (std::size_t i = 0; i < normals.size(); ++i) {
    m.normals[i] = normals[i].normalized();
    m.valid[i] = 1;
  }
  return m;
}

std::vector<Vec3> axial_samples(const Mat3& axes, std::mt19937_64& rng, int n, double noise_deg) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, testing::rad(noise_deg));
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    const double r = u(rng);
    const int k = r < 0.5 ? 2 : (r < 0.8 ? 0 : 1);
    Vec3 v = axes.col(k) * (u(rng) < 0.5 ? 1 : -1);
    v += Vec3(g(rng), g(rng), g(rng));
    out.push_back(v.normalized());
  }
  return out;
}

// Smallest axial angle between `v` and any column of `axes`.
double axial_distance_deg(const Mat3& axes, const Vec3& v) {
  double best = 180;
  for (int k = 0; k < 3; ++k) {
    const Vec3 c = axes.col(k);
    best = std::min(best, deg(std::atan2(c.cross(v).norm(), std::abs(c.dot(v)))));
  }
  return best;
}

TEST(OrthogonalClustering, ExactAxesAreAFixedPoint) {
  std::mt19937_64 rng(1);
  const NormalMap m = map_from(axial_samples(Mat3::Identity(), rng, 900, 0.0), 30);
  const auto r = cluster_normals_orthogonal(m);
  ASSERT_FALSE(r.frame.empty);
  for (int k = 0; k < 3; ++k) EXPECT_LT(axial_distance_deg(r.frame.axes, Mat3::Identity().col(k)), 1e-7);
  const Mat3 P = r.frame.axes.cwiseAbs();
  EXPECT_NEAR((P * P.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 0, 1e-9);
}

TEST(OrthogonalClustering, FrameIsARotationUnderNoise) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Mat3 truth = testing::random_rotation(rng);
    const NormalMap m = map_from(axial_samples(truth, rng, 2000, 8.0), 50);
    const auto r = cluster_normals_orthogonal(m);
    const Mat3& C = r.frame.axes;
    EXPECT_LE((C.transpose() * C - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(C.determinant(), 1.0, 1e-9);
    for (int k = 0; k < 3; ++k) EXPECT_LT(axial_distance_deg(C, truth.col(k)), 2.0);
  }
}

TEST(OrthogonalClustering, Equivariance) {
  std::mt19937_64 rng(4);
  const auto base = axial_samples(Mat3::Identity(), rng, 1200, 0.0);
  const Mat3 R = testing::rotation_about(Vec3(1, 2, 3), 37.0);
  std::vector<Vec3> rotated;
  for (const auto& v : base) rotated.push_back(R * v);
  const auto a = cluster_normals_orthogonal(map_from(base, 40));
  const auto b = cluster_normals_orthogonal(map_from(rotated, 40));
  for (int k = 0; k < 3; ++k) EXPECT_LT(axial_distance_deg(b.frame.axes, R * a.frame.axes.col(k)), 1e-6);
}

TEST(OrthogonalClustering, AntipodalInvariance) {
  std::mt19937_64 rng(9);
  const Mat3 truth = testing::random_rotation(rng);
  auto normals = axial_samples(truth, rng, 2500, 10.0);
  const auto a = cluster_normals_orthogonal(map_from(normals, 50));
  std::bernoulli_distribution flip(0.4);
  for (auto& v : normals)
    if (flip(rng)) v = -v;
  const auto b = cluster_normals_orthogonal(map_from(normals, 50));
  EXPECT_EQ(a.assignment.labels, b.assignment.labels);
  for (int k = 0; k < 3; ++k)
    EXPECT_NEAR(std::abs(a.frame.axes.col(k).dot(b.frame.axes.col(k))), 1.0, 1e-9);
}

TEST(OrthogonalClustering, AssignmentRespectsGate) {
  std::mt19937_64 rng(12);
  const NormalMap m = map_from(axial_samples(Mat3::Identity(), rng, 2500, 25.0), 50);
  OrthogonalClusterOptions opt;
  opt.assign_deg = 20.0;
  const auto r = cluster_normals_orthogonal(m, opt);
  int labelled = 0;
  for (std::size_t i = 0; i < m.normals.size(); ++i) {
    const int label = r.assignment.labels[i];
    if (label == 0) continue;
    ++labelled;
    const double c = std::abs(m.normals[i].dot(r.frame.axes.col(label - 1)));
    EXPECT_GE(c, std::cos(testing::rad(20.0)));
  }
  EXPECT_GT(labelled, 0);
  EXPECT_LT(labelled, 2500);
}

TEST(OrthogonalClustering, DeterministicReruns) {
  std::mt19937_64 rng(2);
  const NormalMap m = map_from(axial_samples(testing::random_rotation(rng), rng, 3000, 6.0), 60);
  const auto a = cluster_normals_orthogonal(m);
  const auto b = cluster_normals_orthogonal(m);
  EXPECT_EQ(a.frame.axes, b.frame.axes);
  EXPECT_EQ(a.assignment.labels, b.assignment.labels);
}

TEST(OrthogonalClustering, AllInvalidGivesEmptyFrame) {
  NormalMap m{Raster<Vec3>(20, 20, Vec3::UnitZ()), Mask(20, 20, 0)};
  const auto r = cluster_normals_orthogonal(m);
  EXPECT_TRUE(r.frame.empty);
  EXPECT_EQ(count_set(r.assignment.labels), 0u);
}

TEST(OrthogonalClustering, TooFewNormalsGivesEmptyFrame) {
  std::mt19937_64 rng(3);
  const auto r = cluster_normals_orthogonal(
      map_from(axial_samples(Mat3::Identity(), rng, kMinClusterNormals - 1, 0.0), 10));
  EXPECT_TRUE(r.frame.empty);
}

TEST(OrthogonalClustering, RecoversPerpendicularPlanesOfRenderedScene) {
  const TwoViewCase c = two_view_case(20.0, 3.0, Layout::kTwoOrthogonal, 5);
  const NormalMap n = estimate_normals(backproject_map(c.view_a.depth, c.K_a), c.K_a);
  const auto r = cluster_normals_orthogonal(n);
  for (const auto& plane : c.scene.planes) {
    const Vec3 gt = c.pose_a.R * plane.normal();
    EXPECT_LT(axial_distance_deg(r.frame.axes, gt), 2.0);
  }
}

TEST(HistogramClustering, FibonacciCellsCoverTheHemisphere) {
  const auto cells = fibonacci_hemisphere(200);
  ASSERT_EQ(cells.size(), 200u);
  for (const auto& c : cells) {
    EXPECT_NEAR(c.norm(), 1.0, 1e-12);
    EXPECT_GE(c.z(), 0.0);
  }
}

TEST(HistogramClustering, SinglePlaneGivesOneHypothesis) {
  const Intrinsics K = testing::make_K();
  const double tilt = 40.0;
  const RenderedView v = testing::render_single(testing::tilted_plane(3.0, tilt), K);
  const NormalMap n = estimate_normals(backproject_map(v.depth, K), K);
  const auto r = cluster_normals_histogram(n);
  ASSERT_EQ(r.axes.size(), 1u);
  EXPECT_LT(deg(std::acos(std::min(1.0, std::abs(r.axes[0].dot(testing::tilted_normal(tilt)))))),
            2.0);
}

TEST(HistogramClustering, UniformNormalsGiveNoHypothesis) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::vector<Vec3> normals;
  for (int i = 0; i < 20000; ++i) normals.push_back(Vec3(g(rng), g(rng), g(rng)));
  HistogramClusterOptions opt;
  opt.threshold_frac = 0.1;
  EXPECT_TRUE(cluster_normals_histogram(map_from(normals, 200), opt).axes.empty());
}

TEST(HistogramClustering, EmptyInput) {
  NormalMap m{Raster<Vec3>(10, 10, Vec3::UnitZ()), Mask(10, 10, 0)};
  const auto r = cluster_normals_histogram(m);
  EXPECT_TRUE(r.axes.empty());
  EXPECT_EQ(count_set(r.assignment.labels), 0u);
}

TEST(HistogramClustering, MaxAxesCapsHypotheses) {
  std::mt19937_64 rng(5);
  const NormalMap m = map_from(axial_samples(Mat3::Identity(), rng, 3000, 1.0), 60);
  HistogramClusterOptions opt;
  EXPECT_EQ(cluster_normals_histogram(m, opt).axes.size(), 3u);
  opt.max_axes = 2;
  EXPECT_EQ(cluster_normals_histogram(m, opt).axes.size(), 2u);
}

AssignmentMap blank_assignment(int w, int h) { return {Raster<std::uint8_t>(w, h, 0)}; }

void paint(AssignmentMap& a, int x0, int y0, int w, int h, std::uint8_t label) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) a.labels(x, y) = label;
}

TEST(ConnectedComponents, TwoDisjointBlobsGiveTwoPatches) {
  AssignmentMap a = blank_assignment(300, 120);
  paint(a, 0, 0, 100, 50, 1);
  paint(a, 150, 60, 100, 50, 1);
  const auto patches = connected_components(a, 1000);
  ASSERT_EQ(patches.size(), 2u);
  for (const auto& p : patches) {
    EXPECT_EQ(p.pixel_count, 5000u);
    EXPECT_EQ(p.label, 1);
  }
  EXPECT_LT(patches[0].seed_y * 300 + patches[0].seed_x, patches[1].seed_y * 300 + patches[1].seed_x);
}

TEST(ConnectedComponents, SizeThresholdBoundary) {
  AssignmentMap a = blank_assignment(50, 50);
  paint(a, 5, 5, 10, 10, 2);
  EXPECT_EQ(connected_components(a, 101).size(), 0u);
  EXPECT_EQ(connected_components(a, 100).size(), 1u);
}

TEST(ConnectedComponents, DiagonalContactDoesNotConnect) {
  AssignmentMap a = blank_assignment(20, 20);
  paint(a, 0, 0, 5, 5, 1);
  paint(a, 5, 5, 5, 5, 1);
  EXPECT_EQ(connected_components(a, 1).size(), 2u);
}

TEST(ConnectedComponents, OrderedByLabelThenPosition) {
  AssignmentMap a = blank_assignment(40, 40);
  paint(a, 0, 0, 10, 10, 2);
  paint(a, 20, 20, 10, 10, 1);
  paint(a, 0, 20, 10, 10, 1);
  const auto p = connected_components(a, 1);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].label, 1);
  EXPECT_EQ(p[0].seed_x, 0);
  EXPECT_EQ(p[1].label, 1);
  EXPECT_EQ(p[1].seed_x, 20);
  EXPECT_EQ(p[2].label, 2);
}

TEST(ConnectedComponents, RenderedTwoPlaneSceneMatchesGroundTruthMasks) {
  const TwoViewCase c = two_view_case(10.0, 3.0, Layout::kTwoOrthogonal, 17);
  const auto& ids = c.view_a.plane_id;
  const NormalMap n = estimate_normals(backproject_map(c.view_a.depth, c.K_a), c.K_a);
  const auto clustered = cluster_normals_orthogonal(n);
  const std::size_t min_pixels = static_cast<std::size_t>(0.005 * ids.size());
  const auto patches = connected_components(clustered.assignment, min_pixels);
  ASSERT_EQ(patches.size(), 2u);

  const auto near_boundary = [&](int x, int y) {
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        if (!ids.contains(x + dx, y + dy)) return true;
        if (ids(x + dx, y + dy) != ids(x, y)) return true;
      }
    return false;
  };
  for (const auto& p : patches) {
    // The GT plane under the patch is the majority id.
    std::vector<int> votes(c.scene.planes.size(), 0);
    for (int y = 0; y < ids.height(); ++y)
      for (int x = 0; x < ids.width(); ++x)
        if (p.mask(x, y) && ids(x, y) >= 0) ++votes[ids(x, y)];
    const int plane = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    int mismatched_interior = 0;
    for (int y = 0; y < ids.height(); ++y)
      for (int x = 0; x < ids.width(); ++x) {
        const bool gt = ids(x, y) == plane;
        if ((p.mask(x, y) != 0) != gt && !near_boundary(x, y)) ++mismatched_interior;
      }
    EXPECT_EQ(mismatched_interior, 0) << "plane " << plane;
  }
}

TEST(FillPatchHoles, EnclosedHoleIsFilled) {
  AssignmentMap a = blank_assignment(30, 30);
  paint(a, 5, 5, 20, 20, 1);
  paint(a, 12, 12, 4, 4, 0);
  auto patches = connected_components(a, 1);
  ASSERT_EQ(patches.size(), 1u);
  EXPECT_EQ(patches[0].pixel_count, 400u - 16u);
  fill_patch_holes(patches);
  EXPECT_EQ(patches[0].pixel_count, 400u);
  EXPECT_EQ(count_set(patches[0].mask), 400u);
}

TEST(FillPatchHoles, HoleOwnedByAnotherPatchStays) {
  AssignmentMap a = blank_assignment(30, 30);
  paint(a, 5, 5, 20, 20, 1);
  paint(a, 12, 12, 4, 4, 2);
  auto patches = connected_components(a, 1);
  ASSERT_EQ(patches.size(), 2u);
  fill_patch_holes(patches);
  EXPECT_EQ(patches[0].pixel_count, 384u);
  EXPECT_EQ(patches[1].pixel_count, 16u);
}

TEST(RefinePatchNormal, IdenticalMembers) {
  const Intrinsics K = testing::make_K(40, 30, 40);
  const Vec3 n = Vec3(0.2, -0.3, -1).normalized();
  NormalMap m{Raster<Vec3>(40, 30, n), Mask(40, 30, 1)};
  const Vec3 r = refine_patch_normal(Mask(40, 30, 1), m, K);
  EXPECT_LT((r - n).norm(), 1e-12);
}

TEST(RefinePatchNormal, SymmetricNoiseAverages) {
  const Intrinsics K = testing::make_K(40, 40, 40);
  const Vec3 n = Vec3(0.1, 0.2, -1).normalized();
  const Vec3 a = n.unitOrthogonal(), b = n.cross(a);
  NormalMap m{Raster<Vec3>(40, 40, n), Mask(40, 40, 1)};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> phase(0, 2 * testing::kPi);
  const double t = std::tan(testing::rad(1.0));
  for (std::size_t i = 0; i + 1 < m.normals.size(); i += 2) {
    const double p = phase(rng);
    const Vec3 d = t * (std::cos(p) * a + std::sin(p) * b);
    m.normals[i] = (n + d).normalized();
    m.normals[i + 1] = (n - d).normalized();
  }
  const Vec3 r = refine_patch_normal(Mask(40, 40, 1), m, K);
  EXPECT_LT(deg(std::acos(std::min(1.0, r.dot(n)))), 0.2);
}

TEST(RefinePatchNormal, FacesTheCameraEvenWhenMembersAreFlipped) {
  const Intrinsics K = testing::make_K(20, 20, 20);
  const Vec3 n(0, 0, -1);
  NormalMap m{Raster<Vec3>(20, 20, -n), Mask(20, 20, 1)};
  const Vec3 r = refine_patch_normal(Mask(20, 20, 1), m, K);
  EXPECT_LT((r - n).norm(), 1e-12);
}

TEST(RefinePatchNormal, RenderedPlane) {
  const Intrinsics K = testing::make_K();
  const RenderedView v = testing::render_single(testing::tilted_plane(3.0, 55.0), K);
  const NormalMap n = estimate_normals(backproject_map(v.depth, K), K);
  const Vec3 r = refine_patch_normal(n.valid, n, K);
  EXPECT_LT(deg(std::acos(std::min(1.0, r.dot(testing::tilted_normal(55.0))))), 1.0);
}

TEST(RefinePatchNormal, EmptyMaskThrows) {
  const Intrinsics K = testing::make_K(10, 10, 10);
  NormalMap m{Raster<Vec3>(10, 10, Vec3::UnitZ()), Mask(10, 10, 1)};
  EXPECT_THROW(refine_patch_normal(Mask(10, 10, 0), m, K), Error);
}

TEST(MaskHelpers, BoundingBoxAndCentroid) {
  Mask m(10, 8, 0);
  m(2, 3) = m(6, 5) = 1;
  const PixelBox b = bounding_box(m);
  EXPECT_EQ(b.x0, 2);
  EXPECT_EQ(b.y1, 5);
  EXPECT_EQ(b.width(), 5);
  EXPECT_EQ(mask_centroid(m), Vec2(4, 4));
}

}  // namespace
}  // namespace unwarp
