#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cstdint>
#include <vector>

namespace splatrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Pinhole intrinsics in pixel units. Pixel (ix, iy) samples the continuous
// image plane at exactly (ix, iy).
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

template <typename T>
T image_zero() {
  return T{};
}
template <>
inline Vec3 image_zero<Vec3>() {
  return Vec3::Zero();
}

// Dense row-major single-channel image.
template <typename T>
struct Image {
  int width = 0, height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, image_zero<T>()) {}
  Image(int w, int h, T fill) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& operator()(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  bool same_size(int w, int h) const { return width == w && height == h; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using Image1 = Image<double>;
using Image3 = Image<Vec3>;
using ImageI = Image<int32_t>;
using ImageB = Image<uint8_t>;

// H x W x D image with a runtime channel count (feature maps).
struct FeatureImage {
  int width = 0, height = 0, dim = 0;
  std::vector<double> data;

  FeatureImage() = default;
  FeatureImage(int w, int h, int d)
      : width(w), height(h), dim(d), data(static_cast<size_t>(w) * h * d, 0.0) {}

  Eigen::Map<VecX> at(int y, int x) {
    return Eigen::Map<VecX>(data.data() + (static_cast<size_t>(y) * width + x) * dim, dim);
  }
  Eigen::Map<const VecX> at(int y, int x) const {
    return Eigen::Map<const VecX>(data.data() + (static_cast<size_t>(y) * width + x) * dim, dim);
  }
  bool same_size(int w, int h) const { return width == w && height == h; }
};

}  // namespace splatrack
