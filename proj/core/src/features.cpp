#include "unwarp/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>

#include "unwarp/error.hpp"
#include "unwarp/parallel.hpp"
#include "unwarp/rectification.hpp"

namespace unwarp {

void FeatureSet::append(const FeatureSet& other, std::size_t i,
                        const Keypoint& kp, std::int32_t tag) {
  if (keypoints.empty() && floats.empty() && bits.empty()) {
    type = other.type;
    descriptor_length = other.descriptor_length;
  }
  if (type != other.type || descriptor_length != other.descriptor_length) {
    fail(ErrorCode::kDescriptorMismatch, "FeatureSet::append: descriptor layout differs");
  }
  keypoints.push_back(kp);
  provenance.push_back(tag);
  if (type == DescriptorType::kFloat) {
    const float* d = other.float_descriptor(i);
    floats.insert(floats.end(), d, d + descriptor_length);
  } else {
    const std::uint8_t* d = other.bit_descriptor(i);
    bits.insert(bits.end(), d, d + bytes_per_descriptor());
  }
}

void FeatureSet::validate() const {
  const std::size_t n = keypoints.size();
  const bool ok = provenance.size() == n &&
                  (type == DescriptorType::kFloat
                       ? floats.size() == n * descriptor_length && bits.empty()
                       : bits.size() == n * bytes_per_descriptor() && floats.empty());
  if (!ok) fail(ErrorCode::kValidation, "FeatureSet: parallel arrays disagree");
}

namespace {

constexpr int kDescriptorGrid = 16;
constexpr int kOrientationBins = 36;

std::vector<float> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + r] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Separable blur with replicated borders.
Image blur(const Image& src, double sigma) {
  if (sigma <= 0) return src;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = src.width(), h = src.height();
  Image tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  }
  return out;
}

Image downsample(const Image& src) {
  const int w = src.width() / 2, h = src.height() / 2;
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(x, y) = 0.25f * (src(2 * x, 2 * y) + src(2 * x + 1, 2 * y) +
                           src(2 * x, 2 * y + 1) + src(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

struct Level {
  int octave = 0;
  double rel_sigma = 1.0;   // absolute blur in this octave's pixels
  double scale = 1.0;       // the same blur in original pixels
  Image smooth;
  Raster<float> response;
  Raster<float> laplacian;  // scale-normalised, absolute value

  // Original-frame coordinate of a level pixel coordinate.
  double to_original(double v) const {
    const double f = std::ldexp(1.0, octave);
    return (v + 0.5) * f - 0.5;
  }
  double from_original(double v) const {
    const double f = std::ldexp(1.0, octave);
    return (v + 0.5) / f - 0.5;
  }
};

void harris_response(Level& level, double k) {
  const Image& img = level.smooth;
  const int w = img.width(), h = img.height();
  Image ixx(w, h), iyy(w, h), ixy(w, h);
  level.laplacian = Raster<float>(w, h, 0.0f);
  // Scale-normalised derivatives keep responses comparable across levels.
  const float norm = static_cast<float>(level.rel_sigma);
  const float norm2 = norm * norm;
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const float gx = 0.5f * norm * (img(xp, y) - img(xm, y));
      const float gy = 0.5f * norm * (img(x, yp) - img(x, ym));
      ixx(x, y) = gx * gx;
      iyy(x, y) = gy * gy;
      ixy(x, y) = gx * gy;
      level.laplacian(x, y) =
          norm2 * std::abs(img(xp, y) + img(xm, y) + img(x, yp) + img(x, ym) - 4 * img(x, y));
    }
  }
  const double integration = 2.0 * level.rel_sigma;
  ixx = blur(ixx, integration);
  iyy = blur(iyy, integration);
  ixy = blur(ixy, integration);
  level.response = Raster<float>(w, h, 0.0f);
  for (std::size_t i = 0; i < level.response.size(); ++i) {
    const double a = ixx[i], b = iyy[i], c = ixy[i];
    level.response[i] = static_cast<float>(a * b - c * c - k * (a + b) * (a + b));
  }
}

constexpr double kBaseSigma = 1.0;
constexpr double kInputSigma = 0.5;

// Levels ordered by scale. Every octave starts at kBaseSigma in its own
// pixels and is seeded from the previous octave's 2*kBaseSigma image.
std::vector<Level> build_scale_space(const Image& image, const ReferenceParams& p) {
  std::vector<Level> levels;
  const int s = std::max(1, p.levels_per_octave);
  Image base = blur(image, std::sqrt(kBaseSigma * kBaseSigma - kInputSigma * kInputSigma));
  for (int o = 0; o < p.octaves; ++o) {
    if (base.width() < 8 || base.height() < 8) break;
    for (int i = 0; i < s; ++i) {
      Level lv;
      lv.octave = o;
      lv.rel_sigma = kBaseSigma * std::pow(2.0, static_cast<double>(i) / s);
      lv.scale = std::ldexp(lv.rel_sigma, o);
      lv.smooth = blur(base, std::sqrt(lv.rel_sigma * lv.rel_sigma - kBaseSigma * kBaseSigma));
      harris_response(lv, p.harris_k);
      levels.push_back(std::move(lv));
    }
    base = downsample(blur(base, std::sqrt(3.0) * kBaseSigma));
  }
  return levels;
}

struct Candidate {
  int level = 0;
  int x = 0, y = 0;
  double response = 0;
  Keypoint kp;
};

// Strict maximum with raster-order tie breaking, so plateaus yield one pixel.
bool is_spatial_max(const Raster<float>& r, int x, int y) {
  const float v = r(x, y);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx, ny = y + dy;
      if (!r.contains(nx, ny)) continue;
      const float u = r(nx, ny);
      const bool before = dy < 0 || (dy == 0 && dx < 0);
      if (before ? u >= v : u > v) return false;
    }
  }
  return true;
}

// Laplacian of `other` at the original-frame point, nearest pixel.
float laplacian_at(const Level& other, double ox, double oy) {
  const int x = std::clamp(static_cast<int>(std::lround(other.from_original(ox))), 0,
                           other.laplacian.width() - 1);
  const int y = std::clamp(static_cast<int>(std::lround(other.from_original(oy))), 0,
                           other.laplacian.height() - 1);
  return other.laplacian(x, y);
}

double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2 * b + c;
  if (denom >= 0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

double dominant_orientation(const Image& img, double x, double y, double sigma) {
  std::array<double, kOrientationBins> hist{};
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  const int w = img.width(), h = img.height();
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 1 || py < 1 || px >= w - 1 || py >= h - 1) continue;
      const double r2 = dx * dx + dy * dy;
      if (r2 > radius * radius) continue;
      const double gx = 0.5 * (img(px + 1, py) - img(px - 1, py));
      const double gy = 0.5 * (img(px, py + 1) - img(px, py - 1));
      const double mag = std::hypot(gx, gy);
      if (mag == 0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += 2 * M_PI;
      int bin = static_cast<int>(angle / (2 * M_PI) * kOrientationBins);
      bin = std::min(bin, kOrientationBins - 1);
      hist[bin] += mag * std::exp(-0.5 * r2 / (sigma * sigma));
    }
  }
  // Two passes of circular [1 1 1]/3 smoothing.
  for (int pass = 0; pass < 2; ++pass) {
    std::array<double, kOrientationBins> tmp;
    for (int b = 0; b < kOrientationBins; ++b) {
      tmp[b] = (hist[(b + kOrientationBins - 1) % kOrientationBins] + hist[b] +
                hist[(b + 1) % kOrientationBins]) / 3.0;
    }
    hist = tmp;
  }
  int best = 0;
  for (int b = 1; b < kOrientationBins; ++b) {
    if (hist[b] > hist[best]) best = b;
  }
  const double left = hist[(best + kOrientationBins - 1) % kOrientationBins];
  const double right = hist[(best + 1) % kOrientationBins];
  const double offset = parabolic_offset(left, hist[best], right);
  double angle = (best + 0.5 + offset) * 2 * M_PI / kOrientationBins;
  if (angle > M_PI) angle -= 2 * M_PI;
  return angle;
}

// Returns false for flat patches that cannot be normalised.
bool describe(const Image& img, double x, double y, double rel_sigma,
              double orientation, double support_radius, float* out) {
  const double step = 2.0 * support_radius / kDescriptorGrid * rel_sigma;
  const double c = std::cos(orientation), s = std::sin(orientation);
  const double max_x = img.width() - 1, max_y = img.height() - 1;
  double mean = 0;
  for (int j = 0; j < kDescriptorGrid; ++j) {
    for (int i = 0; i < kDescriptorGrid; ++i) {
      const double u = (i - (kDescriptorGrid - 1) / 2.0) * step;
      const double v = (j - (kDescriptorGrid - 1) / 2.0) * step;
      const double px = std::clamp(x + c * u - s * v, 0.0, max_x);
      const double py = std::clamp(y + s * u + c * v, 0.0, max_y);
      const float val = sample_bilinear(img, px, py);
      out[j * kDescriptorGrid + i] = val;
      mean += val;
    }
  }
  constexpr int n = kDescriptorGrid * kDescriptorGrid;
  mean /= n;
  double norm = 0;
  for (int i = 0; i < n; ++i) {
    out[i] = static_cast<float>(out[i] - mean);
    norm += static_cast<double>(out[i]) * out[i];
  }
  norm = std::sqrt(norm);
  if (norm < 1e-6) return false;
  for (int i = 0; i < n; ++i) out[i] = static_cast<float>(out[i] / norm);
  return true;
}

}  // namespace

SupportChecker::SupportChecker(const Mask& mask)
    : width_(mask.width()), height_(mask.height()),
      holes_(static_cast<std::size_t>(mask.width() + 1) * (mask.height() + 1), 0) {
  const int stride = width_ + 1;
  for (int y = 0; y < height_; ++y) {
    std::uint32_t row = 0;
    for (int x = 0; x < width_; ++x) {
      row += mask(x, y) == 0;
      holes_[(y + 1) * stride + x + 1] = holes_[y * stride + x + 1] + row;
    }
  }
}

bool SupportChecker::inside(const Keypoint& kp, double radius) const {
  const double r = radius * kp.scale;
  const double fx0 = kp.x - r, fy0 = kp.y - r, fx1 = kp.x + r, fy1 = kp.y + r;
  if (fx0 < 0 || fy0 < 0 || fx1 > width_ - 1 || fy1 > height_ - 1) return false;
  const int x0 = static_cast<int>(std::floor(fx0)), y0 = static_cast<int>(std::floor(fy0));
  const int x1 = static_cast<int>(std::ceil(fx1)), y1 = static_cast<int>(std::ceil(fy1));
  const int stride = width_ + 1;
  const auto at = [&](int x, int y) { return holes_[y * stride + x]; };
  const std::uint32_t holes =
      at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
  return holes == 0;
}

FeatureSet reference_extract(const Image& image, const ReferenceParams& params,
                             const Mask* mask) {
  FeatureSet fs;
  fs.type = DescriptorType::kFloat;
  fs.descriptor_length = kDescriptorGrid * kDescriptorGrid;
  if (image.width() < 8 || image.height() < 8) return fs;

  auto levels = build_scale_space(image, params);
  float global_max = 0;
  for (const auto& lv : levels) {
    for (auto v : lv.response.data()) global_max = std::max(global_max, v);
  }
  const double threshold =
      std::max(params.threshold_abs, params.threshold_rel * global_max);

  const Mask full(image.width(), image.height(), 1);
  const SupportChecker support(mask ? *mask : full);

  std::vector<Candidate> candidates;
  for (int li = 0; li < static_cast<int>(levels.size()); ++li) {
    const Level& lv = levels[li];
    const auto& r = lv.response;
    for (int y = 1; y < r.height() - 1; ++y) {
      for (int x = 1; x < r.width() - 1; ++x) {
        const float v = r(x, y);
        if (v <= threshold || !is_spatial_max(r, x, y)) continue;
        const double ox = lv.to_original(x), oy = lv.to_original(y);
        // Scale from the Laplacian extremum; ties go to the finer level.
        const float lap = lv.laplacian(x, y);
        const bool has_prev = li > 0, has_next = li + 1 < static_cast<int>(levels.size());
        const float prev = has_prev ? laplacian_at(levels[li - 1], ox, oy) : 0.0f;
        const float next = has_next ? laplacian_at(levels[li + 1], ox, oy) : 0.0f;
        if ((has_prev && !(lap > prev)) || (has_next && !(lap >= next))) continue;
        const double ds = has_prev && has_next ? parabolic_offset(prev, lap, next) : 0.0;
        const double dx = parabolic_offset(r(x - 1, y), v, r(x + 1, y));
        const double dy = parabolic_offset(r(x, y - 1), v, r(x, y + 1));
        Candidate c;
        c.level = li;
        c.x = x;
        c.y = y;
        c.response = v;
        c.kp.x = lv.to_original(x + dx);
        c.kp.y = lv.to_original(y + dy);
        c.kp.scale = lv.scale * std::pow(2.0, ds / std::max(1, params.levels_per_octave));
        c.kp.score = v;
        if (!support.inside(c.kp, params.support_radius)) continue;
        candidates.push_back(c);
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.response > b.response;
                   });

  std::vector<float> desc(fs.descriptor_length);
  for (const auto& c : candidates) {
    if (static_cast<int>(fs.keypoints.size()) >= params.max_features) break;
    const Level& lv = levels[c.level];
    const double lx = lv.from_original(c.kp.x), ly = lv.from_original(c.kp.y);
    Keypoint kp = c.kp;
    const double rel = std::ldexp(kp.scale, -lv.octave);
    kp.orientation = dominant_orientation(lv.smooth, lx, ly, 4.0 * rel);
    if (!describe(lv.smooth, lx, ly, rel, kp.orientation,
                  params.support_radius, desc.data())) {
      continue;
    }
    fs.keypoints.push_back(kp);
    fs.provenance.push_back(kNonPlanar);
    fs.floats.insert(fs.floats.end(), desc.begin(), desc.end());
  }
  return fs;
}

namespace {

class ReferenceExtractor : public Extractor {
 public:
  explicit ReferenceExtractor(ReferenceParams p) : params_(p) {}
  std::string id() const override { return "reference"; }
  double support_radius() const override { return params_.support_radius; }
  FeatureSet extract(const Image& image, const Mask* mask) const override {
    return reference_extract(image, params_, mask);
  }

 protected:
  ReferenceParams params_;
};

class ReferenceBinaryExtractor : public ReferenceExtractor {
 public:
  using ReferenceExtractor::ReferenceExtractor;
  std::string id() const override { return "reference_binary"; }
  FeatureSet extract(const Image& image, const Mask* mask) const override {
    FeatureSet f = reference_extract(image, params_, mask);
    FeatureSet out;
    out.type = DescriptorType::kBits;
    out.descriptor_length = f.descriptor_length;
    out.keypoints = std::move(f.keypoints);
    out.provenance = std::move(f.provenance);
    const std::size_t bytes = out.bytes_per_descriptor();
    out.bits.assign(out.keypoints.size() * bytes, 0);
    for (std::size_t i = 0; i < out.keypoints.size(); ++i) {
      const float* d = f.float_descriptor(i);
      for (int b = 0; b < f.descriptor_length; ++b) {
        if (d[b] > 0) out.bits[i * bytes + b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
      }
    }
    return out;
  }
};

}  // namespace

std::unique_ptr<Extractor> make_extractor(const std::string& id,
                                          const ReferenceParams& params) {
  if (id == "reference") return std::make_unique<ReferenceExtractor>(params);
  if (id == "reference_binary") return std::make_unique<ReferenceBinaryExtractor>(params);
  fail(ErrorCode::kUnknownExtractor, "unknown extractor id '" + id + "'");
}

FeatureSet filter_by_support(const FeatureSet& features, const Mask& mask,
                             double radius) {
  const SupportChecker checker(mask);
  FeatureSet out;
  out.type = features.type;
  out.descriptor_length = features.descriptor_length;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (checker.inside(features.keypoints[i], radius)) {
      out.append(features, i, features.keypoints[i], features.provenance[i]);
    }
  }
  return out;
}

FeatureSet detect_and_describe(const Image& image, const Mask& mask,
                               const Extractor& extractor) {
  if (!mask.same_shape(image)) {
    fail(ErrorCode::kDimensionMismatch, "detect_and_describe: mask does not match image");
  }
  return filter_by_support(extractor.extract(image, &mask), mask,
                           extractor.support_radius());
}

FeatureSet extract_rectified_features(const Image& image, const RectifiedSet& set,
                                      const Extractor& extractor,
                                      bool transport_shape, int threads) {
  const int w = image.width(), h = image.height();
  if (!set.non_planar.same_shape(image)) {
    fail(ErrorCode::kDimensionMismatch, "extract_rectified_features: mask size differs");
  }
  std::vector<FeatureSet> per_patch(set.patches.size());
  parallel_for(set.patches.size(), threads, [&](std::size_t k) {
    const RectifiedPatch& patch = set.patches[k];
    const FeatureSet local = detect_and_describe(patch.raster, patch.valid, extractor);
    auto [mapped, kept] =
        backwarp_keypoints(local.keypoints, patch.H, w, h, transport_shape);
    FeatureSet& out = per_patch[k];
    out.type = local.type;
    out.descriptor_length = local.descriptor_length;
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      const int rx = static_cast<int>(std::lround(mapped[i].x));
      const int ry = static_cast<int>(std::lround(mapped[i].y));
      if (!patch.source.mask(rx, ry)) continue;
      out.append(local, kept[i], mapped[i], static_cast<std::int32_t>(k));
    }
  });

  FeatureSet merged;
  const FeatureSet plain = detect_and_describe(image, set.non_planar, extractor);
  merged.type = plain.type;
  merged.descriptor_length = plain.descriptor_length;
  for (const auto& fs : per_patch) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      merged.append(fs, i, fs.keypoints[i], fs.provenance[i]);
    }
  }
  for (std::size_t i = 0; i < plain.size(); ++i) {
    const Keypoint& kp = plain.keypoints[i];
    const int rx = static_cast<int>(std::lround(kp.x));
    const int ry = static_cast<int>(std::lround(kp.y));
    if (!set.non_planar(rx, ry)) continue;
    merged.append(plain, i, kp, kNonPlanar);
  }
  return merged;
}

}  // namespace unwarp
