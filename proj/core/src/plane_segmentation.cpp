#include "unwarp/plane_segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "unwarp/error.hpp"

namespace unwarp {
namespace {

constexpr double kDegToRad = M_PI / 180.0;

std::vector<Vec3> collect_normals(const NormalMap& normals, int stride) {
  std::vector<Vec3> out;
  for (int y = 0; y < normals.height(); y += stride) {
    for (int x = 0; x < normals.width(); x += stride) {
      if (normals.valid(x, y)) out.push_back(normals.normals(x, y));
    }
  }
  return out;
}

Mat3 scatter(const std::vector<Vec3>& ns) {
  Mat3 s = Mat3::Zero();
  for (const auto& n : ns) s.noalias() += n * n.transpose();
  return s;
}

// Eigenvectors sorted by decreasing eigenvalue, as a proper rotation.
Mat3 eigen_frame(const Mat3& s) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(s);
  Mat3 axes;
  axes.col(0) = solver.eigenvectors().col(2);
  axes.col(1) = solver.eigenvectors().col(1);
  axes.col(2) = solver.eigenvectors().col(0);
  if (axes.determinant() < 0) axes.col(2) = -axes.col(2);
  return axes;
}

int closest_axis(const Vec3& n, const Mat3& axes) {
  int best = 0;
  double best_dot = -1.0;
  for (int j = 0; j < 3; ++j) {
    const double d = std::abs(n.dot(axes.col(j)));
    if (d > best_dot) {
      best_dot = d;
      best = j;
    }
  }
  return best;
}

// Nearest rotation to the count-weighted axis matrix. Empty clusters get a
// small weight so the single-plane case still has a unique answer.
Mat3 procrustes(const Mat3& previous, const Mat3& updated,
                const std::array<std::size_t, 3>& counts) {
  const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
  Mat3 m;
  for (int j = 0; j < 3; ++j) {
    Vec3 c = updated.col(j);
    if (c.dot(previous.col(j)) < 0) c = -c;
    m.col(j) = c * (counts[j] / total + 1e-3);
  }
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace

AssignmentMap assign_to_axes(const NormalMap& normals,
                             const std::vector<Vec3>& axes, double assign_deg) {
  AssignmentMap out{Raster<std::uint8_t>(normals.width(), normals.height(), 0)};
  if (axes.empty()) return out;
  const double min_cos = std::cos(assign_deg * kDegToRad);
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      if (!normals.valid(x, y)) continue;
      const Vec3& n = normals.normals(x, y);
      double best = -1.0;
      int best_j = -1;
      for (std::size_t j = 0; j < axes.size(); ++j) {
        const double d = std::abs(n.dot(axes[j]));
        if (d > best) {
          best = d;
          best_j = static_cast<int>(j);
        }
      }
      if (best >= min_cos) out.labels(x, y) = static_cast<std::uint8_t>(best_j + 1);
    }
  }
  return out;
}

OrthogonalClustering cluster_normals_orthogonal(
    const NormalMap& normals, const OrthogonalClusterOptions& options) {
  if (options.stride < 1 || options.max_iters < 0) {
    fail(ErrorCode::kInvalidArgument, "cluster_normals_orthogonal: bad options");
  }
  OrthogonalClustering result;
  result.assignment.labels = Raster<std::uint8_t>(normals.width(), normals.height(), 0);

  const auto sample = collect_normals(normals, options.stride);
  if (sample.size() < kMinClusterNormals) return result;

  Mat3 axes = eigen_frame(scatter(sample));
  std::vector<int> labels(sample.size(), -1);
  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    bool changed = false;
    std::array<Mat3, 3> scatters{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
    std::array<std::size_t, 3> counts{0, 0, 0};
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const int j = closest_axis(sample[i], axes);
      changed |= labels[i] != j;
      labels[i] = j;
      scatters[j].noalias() += sample[i] * sample[i].transpose();
      ++counts[j];
    }
    Mat3 updated = axes;
    for (int j = 0; j < 3; ++j) {
      if (counts[j] > 0) updated.col(j) = principal_eigenvector(scatters[j]);
    }
    const Mat3 next = procrustes(axes, updated, counts);
    const double moved = (next - axes).cwiseAbs().maxCoeff();
    axes = next;
    // The frame keeps moving for a step after labels settle; stop once both
    // are stable.
    if (!changed && moved < 1e-13) {
      ++iter;
      break;
    }
  }

  result.frame.axes = axes;
  result.frame.empty = false;
  result.iterations = iter;
  result.assignment = assign_to_axes(
      normals, {axes.col(0), axes.col(1), axes.col(2)}, options.assign_deg);
  return result;
}

std::vector<Vec3> fibonacci_hemisphere(int n) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    // z uniform in (0, 1] gives equal-area bands on the hemisphere.
    const double z = 1.0 - (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    pts.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return pts;
}

HistogramClustering cluster_normals_histogram(
    const NormalMap& normals, const HistogramClusterOptions& options) {
  if (options.bins < 1 || !(options.threshold_frac > 0) || options.max_axes < 1) {
    fail(ErrorCode::kInvalidArgument, "cluster_normals_histogram: bad options");
  }
  HistogramClustering result;
  result.assignment.labels = Raster<std::uint8_t>(normals.width(), normals.height(), 0);

  const auto sample = collect_normals(normals, 1);
  if (sample.size() < kMinClusterNormals) return result;

  const auto cells = fibonacci_hemisphere(options.bins);
  std::vector<std::size_t> counts(cells.size(), 0);
  std::vector<int> cell_of(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double best = -1.0;
    int best_c = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double d = std::abs(sample[i].dot(cells[c]));
      if (d > best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    cell_of[i] = best_c;
    ++counts[best_c];
  }

  const double min_count = options.threshold_frac * sample.size();
  const double nms_cos = std::cos(options.nms_deg * kDegToRad);
  std::vector<int> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return counts[a] > counts[b]; });

  std::vector<int> kept;
  for (int c : order) {
    if (counts[c] < min_count) break;
    bool suppressed = false;
    for (int k : kept) {
      if (std::abs(cells[c].dot(cells[k])) >= nms_cos) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
    if (kept.size() >= static_cast<std::size_t>(std::min(options.max_axes, 255))) break;
  }

  // Cell centres are ~10 degrees apart; refine each hypothesis from the
  // normals that fall within the suppression radius.
  for (int c : kept) {
    Mat3 s = Mat3::Zero();
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (std::abs(sample[i].dot(cells[c])) >= nms_cos) {
        s.noalias() += sample[i] * sample[i].transpose();
      }
    }
    Vec3 axis = principal_eigenvector(s);
    if (axis.dot(cells[c]) < 0) axis = -axis;
    result.axes.push_back(axis);
  }
  result.assignment = assign_to_axes(normals, result.axes, options.assign_deg);
  return result;
}

PixelBox bounding_box(const Mask& mask) {
  PixelBox b{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  return b;
}

Vec2 mask_centroid(const Mask& mask) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) fail(ErrorCode::kEmptyPatch, "centroid of an empty mask");
  return {sx / n, sy / n};
}

std::vector<PlanarPatch> connected_components(const AssignmentMap& assign,
                                              std::size_t min_patch_pixels) {
  const int w = assign.width(), h = assign.height();
  std::vector<PlanarPatch> patches;
  Raster<std::uint8_t> seen(w, h, 0);
  std::vector<std::pair<int, int>> stack;
  std::vector<std::pair<int, int>> members;

  int max_label = 0;
  for (auto v : assign.labels.data()) max_label = std::max<int>(max_label, v);

  for (int label = 1; label <= max_label; ++label) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (seen(x, y) || assign.labels(x, y) != label) continue;
        members.clear();
        stack.assign(1, {x, y});
        seen(x, y) = 1;
        while (!stack.empty()) {
          const auto [px, py] = stack.back();
          stack.pop_back();
          members.emplace_back(px, py);
          constexpr int kDx[4] = {1, -1, 0, 0};
          constexpr int kDy[4] = {0, 0, 1, -1};
          for (int k = 0; k < 4; ++k) {
            const int nx = px + kDx[k], ny = py + kDy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (seen(nx, ny) || assign.labels(nx, ny) != label) continue;
            seen(nx, ny) = 1;
            stack.emplace_back(nx, ny);
          }
        }
        if (members.size() < min_patch_pixels || members.empty()) continue;
        PlanarPatch p;
        p.mask = Mask(w, h, 0);
        p.label = label;
        p.pixel_count = members.size();
        p.box = {w, h, -1, -1};
        for (const auto& [mx, my] : members) {
          p.mask(mx, my) = 1;
          p.box.x0 = std::min(p.box.x0, mx);
          p.box.y0 = std::min(p.box.y0, my);
          p.box.x1 = std::max(p.box.x1, mx);
          p.box.y1 = std::max(p.box.y1, my);
        }
        p.seed_x = x;
        p.seed_y = y;
        patches.push_back(std::move(p));
      }
    }
  }
  return patches;
}

void fill_patch_holes(std::vector<PlanarPatch>& patches) {
  if (patches.empty()) return;
  const int w = patches.front().mask.width(), h = patches.front().mask.height();
  Raster<std::uint8_t> owned(w, h, 0);
  for (const auto& p : patches) {
    for (std::size_t i = 0; i < p.mask.size(); ++i) owned[i] |= p.mask[i];
  }
  std::vector<std::pair<int, int>> stack;
  for (auto& p : patches) {
    // Flood the complement from the box border; whatever stays unreached is
    // enclosed by the patch.
    const PixelBox b = p.box;
    const int bw = b.width() + 2, bh = b.height() + 2;
    Raster<std::uint8_t> outside(bw, bh, 0);
    auto inside_patch = [&](int lx, int ly) {
      const int gx = lx + b.x0 - 1, gy = ly + b.y0 - 1;
      return gx >= 0 && gy >= 0 && gx < w && gy < h && p.mask(gx, gy);
    };
    stack.assign(1, {0, 0});
    outside(0, 0) = 1;
    while (!stack.empty()) {
      const auto [lx, ly] = stack.back();
      stack.pop_back();
      constexpr int kDx[4] = {1, -1, 0, 0};
      constexpr int kDy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = lx + kDx[k], ny = ly + kDy[k];
        if (nx < 0 || ny < 0 || nx >= bw || ny >= bh) continue;
        if (outside(nx, ny) || inside_patch(nx, ny)) continue;
        outside(nx, ny) = 1;
        stack.emplace_back(nx, ny);
      }
    }
    for (int y = b.y0; y <= b.y1; ++y) {
      for (int x = b.x0; x <= b.x1; ++x) {
        if (p.mask(x, y) || owned(x, y)) continue;
        if (!outside(x - b.x0 + 1, y - b.y0 + 1)) {
          p.mask(x, y) = 1;
          owned(x, y) = 1;
          ++p.pixel_count;
        }
      }
    }
  }
}

Vec3 refine_patch_normal(const Mask& mask, const NormalMap& normals,
                         const Intrinsics& K) {
  Mat3 s = Mat3::Zero();
  std::size_t n = 0;
  double sx = 0, sy = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
      if (!normals.valid(x, y)) continue;
      const Vec3& v = normals.normals(x, y);
      s.noalias() += v * v.transpose();
    }
  }
  if (n == 0) fail(ErrorCode::kEmptyPatch, "refine_patch_normal: empty mask");
  if (s.trace() <= 0) {
    fail(ErrorCode::kEmptyPatch, "refine_patch_normal: no valid normals in mask");
  }
  Vec3 normal = principal_eigenvector(s);
  const Vec3 ray = viewing_ray(K, sx / n, sy / n);
  if (normal.dot(ray) > 0) normal = -normal;
  return normal;
}

}  // namespace unwarp
