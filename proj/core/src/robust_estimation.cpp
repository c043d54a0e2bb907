#include "unwarp/robust_estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "unwarp/error.hpp"
#include "unwarp/parallel.hpp"

namespace unwarp {
namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Neighbours {
  int best = -1;
  int second = -1;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();

  void offer(int j, double d) {
    if (d < d1) {
      second = best;
      d2 = d1;
      best = j;
      d1 = d;
    } else if (d < d2) {
      second = j;
      d2 = d;
    }
  }
};

double l2(const float* a, const float* b, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double hamming(const std::uint8_t* a, const std::uint8_t* b, std::size_t bytes) {
  int s = 0;
  for (std::size_t i = 0; i < bytes; ++i) s += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
  return s;
}

// Nearest two neighbours in `to` for every row of `from`.
std::vector<Neighbours> nearest_two(const FeatureSet& from, const FeatureSet& to) {
  const std::size_t n = from.size();
  const std::size_t m = to.size();
  std::vector<Neighbours> out(n);
  if (n == 0 || m == 0) return out;

  if (from.type == DescriptorType::kBits) {
    const std::size_t bytes = from.bytes_per_descriptor();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        out[i].offer(static_cast<int>(j),
                     hamming(from.bit_descriptor(i), to.bit_descriptor(j), bytes));
    return out;
  }

  // Shortlist with |a|^2 + |b|^2 - 2ab from one matrix product, then rescore
  // the survivors exactly so that identical descriptors give distance 0.
  const int len = from.descriptor_length;
  Eigen::Map<const RowMatF> A(from.floats.data(), n, len);
  Eigen::Map<const RowMatF> B(to.floats.data(), m, len);
  const Eigen::VectorXf na = A.rowwise().squaredNorm();
  const Eigen::VectorXf nb = B.rowwise().squaredNorm();
  constexpr std::size_t kBlock = 256;
  for (std::size_t r0 = 0; r0 < n; r0 += kBlock) {
    const std::size_t rows = std::min(kBlock, n - r0);
    const Eigen::MatrixXf dots = A.middleRows(r0, rows) * B.transpose();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = r0 + r;
      // Keep a few candidates so float rounding cannot hide the true top two.
      std::array<std::pair<float, int>, 4> cand;
      cand.fill({std::numeric_limits<float>::infinity(), -1});
      for (std::size_t j = 0; j < m; ++j) {
        const float d = na[i] + nb[j] - 2.0f * dots(r, j);
        if (d < cand.back().first) {
          cand.back() = {d, static_cast<int>(j)};
          std::sort(cand.begin(), cand.end());
        }
      }
      for (const auto& [approx, j] : cand) {
        if (j < 0) continue;
        out[i].offer(j, l2(from.float_descriptor(i), to.float_descriptor(j), len));
      }
    }
  }
  return out;
}

struct Normaliser {
  Mat3 T = Mat3::Identity();
};

Normaliser hartley(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean = 0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= static_cast<double>(pts.size());
  const double s = mean > 0 ? std::sqrt(2.0) / mean : 1.0;
  Normaliser n;
  n.T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return n;
}

Vec2 apply_affine(const Mat3& T, const Vec2& p) {
  return {T(0, 0) * p.x() + T(0, 2), T(1, 1) * p.y() + T(1, 2)};
}

double scale_of(std::span<const Vec2> pts) {
  double s = 0;
  for (const auto& p : pts) s = std::max(s, p.cwiseAbs().maxCoeff());
  return std::max(s, 1.0);
}

bool collinear(const Vec2& a, const Vec2& b, const Vec2& c, double scale) {
  const Vec2 u = b - a;
  const Vec2 v = c - a;
  return std::abs(u.x() * v.y() - u.y() * v.x()) <= 1e-10 * scale * scale;
}

bool any_three_collinear(std::span<const Vec2> pts) {
  const double s = scale_of(pts);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k)
        if (collinear(pts[i], pts[j], pts[k], s)) return true;
  return false;
}

bool all_collinear(std::span<const Vec2> pts) {
  const double s = scale_of(pts);
  // Find two distinct points, then test the rest against their line.
  std::size_t j = 1;
  while (j < pts.size() && (pts[j] - pts[0]).norm() <= 1e-10 * s) ++j;
  if (j >= pts.size()) return true;
  for (std::size_t k = 1; k < pts.size(); ++k)
    if (!collinear(pts[0], pts[j], pts[k], s)) return false;
  return true;
}

std::vector<int> draw_sample(std::mt19937_64& rng, int n, int k) {
  std::vector<int> s;
  s.reserve(k);
  std::uniform_int_distribution<int> dist(0, n - 1);
  while (static_cast<int>(s.size()) < k) {
    const int v = dist(rng);
    if (std::find(s.begin(), s.end(), v) == s.end()) s.push_back(v);
  }
  return s;
}

int adaptive_iterations(double inlier_frac, int k, double confidence, int cap) {
  if (inlier_frac >= 1.0) return 1;
  const double w = std::pow(inlier_frac, k);
  if (w <= 0) return cap;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - w);
  if (!std::isfinite(n) || n > cap) return cap;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

bool transfer_inlier(const Mat3& H, const Mat3& Hinv, const Vec2& a, const Vec2& b,
                     double thr) {
  const Vec3 fa = H * a.homogeneous();
  const Vec3 bb = Hinv * b.homogeneous();
  if (std::abs(fa.z()) < 1e-12 || std::abs(bb.z()) < 1e-12) return false;
  return (fa.hnormalized() - b).norm() <= thr && (bb.hnormalized() - a).norm() <= thr;
}

std::vector<int> homography_inliers(const Homography& H, const PointPairs& p, double thr) {
  const Mat3 Hinv = H.matrix().inverse();
  std::vector<int> in;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (transfer_inlier(H.matrix(), Hinv, p.a[i], p.b[i], thr)) in.push_back(static_cast<int>(i));
  return in;
}

template <typename Residual>
std::vector<int> epipolar_inliers(const PointPairs& p, double thr, Residual&& r) {
  std::vector<int> in;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (r(p.a[i], p.b[i]) <= thr) in.push_back(static_cast<int>(i));
  return in;
}


// Midpoint triangulation; returns false for (near) parallel rays. Depths are
// along the rays of A and B (whose z components are 1 in their own frames).
bool triangulate_depths(const Mat3& R, const Vec3& t, const Vec3& ray_a, const Vec3& ray_b,
                        double& depth_a, double& depth_b) {
  const Vec3 c_b = -R.transpose() * t;
  const Vec3 d_b = R.transpose() * ray_b;
  const Vec3& d_a = ray_a;
  // Minimise |la d_a - (c_b + mu d_b)|^2.
  const double aa = d_a.dot(d_a);
  const double bb = d_b.dot(d_b);
  const double ab = d_a.dot(d_b);
  const double det = aa * bb - ab * ab;
  if (det <= 1e-12 * aa * bb) return false;
  const double ac = d_a.dot(c_b);
  const double bc = d_b.dot(c_b);
  const double la = (bb * ac - ab * bc) / det;
  const double mu = (ab * ac - aa * bc) / det;
  const Vec3 X = 0.5 * (la * d_a + c_b + mu * d_b);
  depth_a = X.z();
  depth_b = (R * X + t).z();
  return true;
}

int count_in_front(const Mat3& R, const Vec3& t, const PointPairs& p, const Intrinsics& Ka,
                   const Intrinsics& Kb) {
  const Mat3 Kai = Ka.inverse_matrix();
  const Mat3 Kbi = Kb.inverse_matrix();
  int count = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double za = 0, zb = 0;
    if (!triangulate_depths(R, t, Kai * p.a[i].homogeneous(), Kbi * p.b[i].homogeneous(), za, zb))
      continue;
    if (za > 0 && zb > 0) ++count;
  }
  return count;
}

Mat3 nearest_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1 : 1;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

void check_rotation(const Mat3& R) {
  if (!R.allFinite() || (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(R.determinant() - 1.0) > 1e-6)
    fail(ErrorCode::kInvalidArgument, "matrix is not a rotation");
}

// x_b^T F x_a = 0 on pre-normalised points.
Mat3 eight_point_raw(std::span<const Vec2> a, std::span<const Vec2> b) {
  const Normaliser na = hartley(a);
  const Normaliser nb = hartley(b);
  const int n = static_cast<int>(a.size());
  Eigen::MatrixXd A(std::max(n, 9), 9);
  A.setZero();
  for (int i = 0; i < n; ++i) {
    const Vec2 p = apply_affine(na.T, a[i]);
    const Vec2 q = apply_affine(nb.T, b[i]);
    A.row(i) << q.x() * p.x(), q.x() * p.y(), q.x(), q.y() * p.x(), q.y() * p.y(), q.y(), p.x(),
        p.y(), 1;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(7) <= 1e-9 * sv(0))
    fail(ErrorCode::kDegenerate, "eight-point system has a multi-dimensional nullspace");
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 F;
  F << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  Eigen::JacobiSVD<Mat3> fs(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = fs.singularValues();
  s(2) = 0;
  F = fs.matrixU() * s.asDiagonal() * fs.matrixV().transpose();
  F = nb.T.transpose() * F * na.T;
  return F / F.norm();
}

template <typename Fit, typename Score>
EpipolarEstimate epipolar_ransac(const PointPairs& pairs, const RansacOptions& opt, Fit&& fit,
                                 Score&& inliers_of) {
  const int n = static_cast<int>(pairs.size());
  if (n < 8) fail(ErrorCode::kInsufficientData, "at least 8 matches are required");
  std::mt19937_64 rng(opt.seed);
  EpipolarEstimate best;
  bool found = false;
  int needed = opt.max_iters;
  std::array<Vec2, 8> sa, sb;
  for (int it = 0; it < needed && it < opt.max_iters; ++it) {
    const auto s = draw_sample(rng, n, 8);
    for (int k = 0; k < 8; ++k) {
      sa[k] = pairs.a[s[k]];
      sb[k] = pairs.b[s[k]];
    }
    Mat3 M;
    try {
      M = fit(std::span<const Vec2>(sa), std::span<const Vec2>(sb));
    } catch (const Error&) {
      continue;
    }
    auto in = inliers_of(M);
    if (in.size() > best.inliers.size()) {
      best.model = M;
      best.inliers = std::move(in);
      found = true;
      needed = adaptive_iterations(static_cast<double>(best.inliers.size()) / n, 8,
                                   opt.confidence, opt.max_iters);
    }
  }
  if (!found || best.inliers.size() < 8)
    fail(ErrorCode::kNoConsensus, "no epipolar model with at least 8 inliers");
  try {
    const PointPairs sub = pairs.subset(best.inliers);
    const Mat3 M = fit(std::span<const Vec2>(sub.a), std::span<const Vec2>(sub.b));
    auto in = inliers_of(M);
    if (in.size() >= best.inliers.size()) {
      best.model = M;
      best.inliers = std::move(in);
    }
  } catch (const Error&) {
  }
  return best;
}

struct HomographyCandidate {
  Mat3 R;
  Vec3 t;
  Vec3 n;
};

// Faugeras' SVD decomposition of A = d R + t n^T (A maps normalised A-rays
// to normalised B-rays up to scale).
std::vector<HomographyCandidate> decompose_homography(const Mat3& A) {
  Eigen::JacobiSVD<Mat3> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  const double s = U.determinant() * V.determinant();
  const double d1 = svd.singularValues()(0);
  const double d2 = svd.singularValues()(1);
  const double d3 = svd.singularValues()(2);
  std::vector<HomographyCandidate> out;
  if (d1 - d3 <= 1e-9 * d2) return out;

  const double aux1 = std::sqrt(std::max(0.0, (d1 * d1 - d2 * d2) / (d1 * d1 - d3 * d3)));
  const double aux3 = std::sqrt(std::max(0.0, (d2 * d2 - d3 * d3) / (d1 * d1 - d3 * d3)));
  const std::array<double, 4> x1{aux1, aux1, -aux1, -aux1};
  const std::array<double, 4> x3{aux3, -aux3, aux3, -aux3};
  const double root = std::sqrt(std::max(0.0, (d1 * d1 - d2 * d2) * (d2 * d2 - d3 * d3)));

  // d' = d2
  const double st = root / ((d1 + d3) * d2);
  const double ct = (d2 * d2 + d1 * d3) / ((d1 + d3) * d2);
  const std::array<double, 4> sts{st, -st, -st, st};
  for (int i = 0; i < 4; ++i) {
    Mat3 Rp = Mat3::Identity();
    Rp(0, 0) = ct;
    Rp(0, 2) = -sts[i];
    Rp(2, 0) = sts[i];
    Rp(2, 2) = ct;
    const Mat3 R = s * U * Rp * V.transpose();
    const Vec3 tp(x1[i], 0, -x3[i]);
    const Vec3 np(x1[i], 0, x3[i]);
    out.push_back({R, (U * tp * (d1 - d3)).normalized(), (V * np).normalized()});
  }
  // d' = -d2
  const double sp = root / ((d1 - d3) * d2);
  const double cp = (d1 * d3 - d2 * d2) / ((d1 - d3) * d2);
  const std::array<double, 4> sps{sp, -sp, -sp, sp};
  for (int i = 0; i < 4; ++i) {
    Mat3 Rp = Mat3::Zero();
    Rp(0, 0) = cp;
    Rp(0, 2) = sps[i];
    Rp(1, 1) = -1;
    Rp(2, 0) = sps[i];
    Rp(2, 2) = -cp;
    const Mat3 R = s * U * Rp * V.transpose();
    const Vec3 tp(x1[i], 0, x3[i]);
    const Vec3 np(x1[i], 0, x3[i]);
    out.push_back({R, (U * tp * (d1 + d3)).normalized(), (V * np).normalized()});
  }
  return out;
}

}  // namespace

PointPairs PointPairs::subset(std::span<const int> indices) const {
  PointPairs out;
  out.a.reserve(indices.size());
  out.b.reserve(indices.size());
  for (int i : indices) {
    out.a.push_back(a.at(i));
    out.b.push_back(b.at(i));
  }
  return out;
}

MatchSet match_descriptors(const FeatureSet& a, const FeatureSet& b, double ratio, bool mutual) {
  if (a.type != b.type || a.descriptor_length != b.descriptor_length)
    fail(ErrorCode::kDescriptorMismatch, "descriptor layouts differ");
  if (!(ratio > 0 && ratio <= 1)) fail(ErrorCode::kInvalidArgument, "ratio must lie in (0, 1]");
  a.validate();
  b.validate();
  const auto fwd = nearest_two(a, b);
  std::vector<Neighbours> back;
  if (mutual) back = nearest_two(b, a);
  MatchSet out;
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    const auto& nb = fwd[i];
    if (nb.best < 0) continue;
    // With no second neighbour the ratio test is vacuous.
    if (nb.second >= 0 && !(nb.d1 < ratio * nb.d2)) continue;
    if (mutual && back[nb.best].best != static_cast<int>(i)) continue;
    out.push_back({static_cast<int>(i), nb.best, nb.d1});
  }
  return out;
}

PointPairs gather_points(const FeatureSet& a, const FeatureSet& b, const MatchSet& matches) {
  PointPairs p;
  p.a.reserve(matches.size());
  p.b.reserve(matches.size());
  for (const auto& m : matches) {
    const auto& ka = a.keypoints.at(m.query);
    const auto& kb = b.keypoints.at(m.train);
    p.a.emplace_back(ka.x, ka.y);
    p.b.emplace_back(kb.x, kb.y);
  }
  return p;
}

Homography dlt_homography(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size()) fail(ErrorCode::kDimensionMismatch, "point lists differ in length");
  if (src.size() < 4) fail(ErrorCode::kInsufficientData, "at least 4 correspondences are required");
  if (src.size() == 4 ? (any_three_collinear(src) || any_three_collinear(dst))
                      : (all_collinear(src) || all_collinear(dst)))
    fail(ErrorCode::kDegenerate, "collinear correspondences");
  const Normaliser ns = hartley(src);
  const Normaliser nd = hartley(dst);
  const int n = static_cast<int>(src.size());
  Eigen::MatrixXd A(std::max(2 * n, 9), 9);
  A.setZero();
  for (int i = 0; i < n; ++i) {
    const Vec2 p = apply_affine(ns.T, src[i]);
    const Vec2 q = apply_affine(nd.T, dst[i]);
    A.row(2 * i) << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
    A.row(2 * i + 1) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0) || sv(7) <= 1e-10 * sv(0))
    fail(ErrorCode::kDegenerate, "homography system is rank deficient");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 H = nd.T.inverse() * Hn * ns.T;
  if (std::abs(H(2, 2)) < 1e-14 * H.norm() || !H.allFinite())
    fail(ErrorCode::kDegenerate, "homography maps the origin to infinity");
  return Homography(H);
}

HomographyEstimate estimate_homography_ransac(const PointPairs& pairs, const RansacOptions& opt) {
  const int n = static_cast<int>(pairs.size());
  if (n < 4) fail(ErrorCode::kInsufficientData, "at least 4 matches are required");
  if (all_collinear(pairs.a) || all_collinear(pairs.b))
    fail(ErrorCode::kDegenerate, "all matches are collinear");
  std::mt19937_64 rng(opt.seed);
  HomographyEstimate best;
  bool found = false;
  int needed = opt.max_iters;
  std::array<Vec2, 4> sa, sb;
  for (int it = 0; it < needed && it < opt.max_iters; ++it) {
    const auto s = draw_sample(rng, n, 4);
    for (int k = 0; k < 4; ++k) {
      sa[k] = pairs.a[s[k]];
      sb[k] = pairs.b[s[k]];
    }
    Homography H;
    try {
      H = dlt_homography(sa, sb);
    } catch (const Error&) {
      continue;
    }
    auto in = homography_inliers(H, pairs, opt.threshold);
    if (in.size() > best.inliers.size()) {
      best.H = H;
      best.inliers = std::move(in);
      found = true;
      needed = adaptive_iterations(static_cast<double>(best.inliers.size()) / n, 4,
                                   opt.confidence, opt.max_iters);
    }
  }
  if (!found || best.inliers.size() < 4)
    fail(ErrorCode::kNoConsensus, "no homography with at least 4 inliers");
  try {
    const PointPairs sub = pairs.subset(best.inliers);
    const Homography H = dlt_homography(sub.a, sub.b);
    auto in = homography_inliers(H, pairs, opt.threshold);
    if (in.size() >= best.inliers.size()) {
      best.H = H;
      best.inliers = std::move(in);
    }
  } catch (const Error&) {
  }
  return best;
}

Mat3 eight_point_fundamental(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "point lists differ in length");
  if (a.size() < 8) fail(ErrorCode::kInsufficientData, "at least 8 correspondences are required");
  return eight_point_raw(a, b);
}

double sampson_distance(const Mat3& F, const Vec2& a, const Vec2& b) {
  const Vec3 xa = a.homogeneous();
  const Vec3 xb = b.homogeneous();
  const Vec3 Fa = F * xa;
  const Vec3 Ftb = F.transpose() * xb;
  const double num = xb.dot(Fa);
  const double den = Fa.x() * Fa.x() + Fa.y() * Fa.y() + Ftb.x() * Ftb.x() + Ftb.y() * Ftb.y();
  if (den <= 0) return std::numeric_limits<double>::infinity();
  return std::abs(num) / std::sqrt(den);
}

EpipolarEstimate estimate_fundamental_ransac(const PointPairs& pairs, const RansacOptions& opt) {
  return epipolar_ransac(
      pairs, opt, [](auto a, auto b) { return eight_point_fundamental(a, b); },
      [&](const Mat3& F) {
        return epipolar_inliers(pairs, opt.threshold,
                                [&](const Vec2& a, const Vec2& b) { return sampson_distance(F, a, b); });
      });
}

Mat3 enforce_essential(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (svd.singularValues()(0) + svd.singularValues()(1));
  if (!(s > 0)) fail(ErrorCode::kDegenerate, "essential matrix has rank below 2");
  const Mat3 out = svd.matrixU() * Vec3(1, 1, 0).asDiagonal() * svd.matrixV().transpose();
  return out / out.norm();
}

EpipolarEstimate estimate_essential_ransac(const PointPairs& pairs, const Intrinsics& Ka,
                                           const Intrinsics& Kb, const RansacOptions& opt) {
  Ka.validate();
  Kb.validate();
  const Mat3 Kai = Ka.inverse_matrix();
  const Mat3 Kbi = Kb.inverse_matrix();
  PointPairs norm;
  norm.a.reserve(pairs.size());
  norm.b.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    norm.a.push_back((Kai * pairs.a[i].homogeneous()).hnormalized());
    norm.b.push_back((Kbi * pairs.b[i].homogeneous()).hnormalized());
  }
  const double focal = 0.25 * (Ka.fx + Ka.fy + Kb.fx + Kb.fy);
  const double thr = opt.threshold / focal;
  return epipolar_ransac(
      norm, opt, [](auto a, auto b) { return enforce_essential(eight_point_fundamental(a, b)); },
      [&](const Mat3& E) {
        return epipolar_inliers(norm, thr,
                                [&](const Vec2& a, const Vec2& b) { return sampson_distance(E, a, b); });
      });
}

RelativePose recover_pose(const Mat3& E, const PointPairs& inliers, const Intrinsics& Ka,
                          const Intrinsics& Kb) {
  if (inliers.size() == 0) fail(ErrorCode::kInsufficientData, "no inlier correspondences");
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0) U.col(2) *= -1;
  if (V.determinant() < 0) V.col(2) *= -1;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const std::array<Mat3, 2> Rs{U * W * V.transpose(), U * W.transpose() * V.transpose()};
  const Vec3 u3 = U.col(2).normalized();
  std::array<int, 4> counts{};
  std::array<RelativePose, 4> poses;
  for (int i = 0; i < 4; ++i) {
    poses[i].R = Rs[i / 2];
    poses[i].t = (i % 2 == 0) ? u3 : Vec3(-u3);
    counts[i] = count_in_front(poses[i].R, poses[i].t, inliers, Ka, Kb);
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return counts[x] > counts[y]; });
  if (counts[order[0]] == counts[order[1]])
    fail(ErrorCode::kAmbiguousPose, "cheirality test does not separate the pose candidates");
  return poses[order[0]];
}

RelativePose recover_pose_from_homography(const Homography& H, const PointPairs& inliers,
                                          const Intrinsics& Ka, const Intrinsics& Kb,
                                          const std::optional<Vec3>& normal_hint) {
  if (inliers.size() == 0) fail(ErrorCode::kInsufficientData, "no inlier correspondences");
  const Mat3 A = Kb.inverse_matrix() * H.matrix() * Ka.matrix();
  auto cands = decompose_homography(A);
  if (cands.empty()) {
    // Equal singular values: the views differ by a rotation only.
    RelativePose p;
    p.R = nearest_rotation(A);
    p.t = Vec3::Zero();
    return p;
  }
  std::vector<int> counts;
  int best = 0;
  for (const auto& c : cands) {
    counts.push_back(count_in_front(c.R, c.t, inliers, Ka, Kb));
    best = std::max(best, counts.back());
  }
  if (best == 0) fail(ErrorCode::kAmbiguousPose, "no homography decomposition passes cheirality");
  int pick = -1;
  double pick_score = -1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (counts[i] < 0.9 * best) continue;
    const double score = normal_hint ? std::abs(cands[i].n.dot(normal_hint->normalized()))
                                     : static_cast<double>(counts[i]);
    if (score > pick_score) {
      pick_score = score;
      pick = static_cast<int>(i);
    }
  }
  RelativePose p;
  p.R = nearest_rotation(cands[pick].R);
  p.t = cands[pick].t.normalized();
  return p;
}

double rotation_error_deg(const Mat3& R_est, const Mat3& R_gt) {
  check_rotation(R_est);
  check_rotation(R_gt);
  const Mat3 D = R_est * R_gt.transpose();
  // atan2 form of acos((tr - 1) / 2): accurate at both ends of [0, 180].
  const double c = std::clamp((D.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 w(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  const double s = 0.5 * w.norm();
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

double direction_error_deg(const Vec3& a, const Vec3& b) {
  if (!(a.norm() > 0) || !(b.norm() > 0)) fail(ErrorCode::kInvalidArgument, "zero direction");
  const Vec3 u = a.normalized();
  const Vec3 v = b.normalized();
  return std::atan2(u.cross(v).norm(), u.dot(v)) * 180.0 / std::numbers::pi;
}

TwoViewEstimate estimate_two_view_pose(
    const PointPairs& pairs, const Intrinsics& Ka, const Intrinsics& Kb,
    const TwoViewOptions& options,
    const std::function<std::optional<Vec3>(const std::vector<int>&)>& normal_hint) {
  if (pairs.size() < 8) fail(ErrorCode::kInsufficientData, "at least 8 matches are required");
  RansacOptions eo{options.sampson_px, options.confidence, options.max_iters, options.seed};
  RansacOptions ho{options.planar_px, options.confidence, options.max_iters,
                   splitmix64(options.seed ^ 0x486f6d6fULL)};

  std::optional<EpipolarEstimate> E;
  try {
    E = estimate_essential_ransac(pairs, Ka, Kb, eo);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoConsensus && e.code() != ErrorCode::kDegenerate) throw;
  }
  std::optional<HomographyEstimate> H;
  try {
    H = estimate_homography_ransac(pairs, ho);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoConsensus && e.code() != ErrorCode::kDegenerate) throw;
  }
  if (!E && !H) fail(ErrorCode::kNoConsensus, "neither epipolar nor planar model found");

  const bool planar =
      H && H->inliers.size() >= 8 &&
      (!E || static_cast<double>(H->inliers.size()) >= options.planar_ratio * E->inliers.size());
  TwoViewEstimate out;
  if (planar) {
    std::optional<Vec3> hint;
    if (normal_hint) hint = normal_hint(H->inliers);
    out.pose = recover_pose_from_homography(H->H, pairs.subset(H->inliers), Ka, Kb, hint);
    out.inliers = H->inliers;
    out.model = "homography";
  } else {
    if (!E) fail(ErrorCode::kNoConsensus, "no epipolar model found");
    out.pose = recover_pose(E->model, pairs.subset(E->inliers), Ka, Kb);
    out.inliers = E->inliers;
    out.model = "essential";
  }
  return out;
}

}  // namespace unwarp
