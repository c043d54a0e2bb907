#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace unwarp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Row-major 2D grid.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, const T& fill = T())
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(int w, int h) const noexcept {
    return width_ == w && height_ == h;
  }
  template <typename U>
  bool same_shape(const Raster<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Raster& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Grayscale intensities in [0, 1].
using Image = Raster<float>;
// 0 = outside, anything else = inside.
using Mask = Raster<std::uint8_t>;

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v != 0;
  return n;
}

// Bilinear lookup; caller guarantees 0 <= x <= w-1, 0 <= y <= h-1.
inline float sample_bilinear(const Image& img, double x, double y) {
  const int w = img.width(), h = img.height();
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  if (x0 >= w - 1) x0 = w - 2;
  if (y0 >= h - 1) y0 = h - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  const double ax = x - x0, ay = y - y0;
  if (w == 1 || h == 1) return img(x0, y0);
  const double top = (1 - ax) * img(x0, y0) + ax * img(x0 + 1, y0);
  const double bot = (1 - ax) * img(x0, y0 + 1) + ax * img(x0 + 1, y0 + 1);
  return static_cast<float>((1 - ay) * top + ay * bot);
}

}  // namespace unwarp
