#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ssimadv {

template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Spatial extent of an image or intermediate activation tensor.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  int pixels_per_channel() const { return height * width; }
  int size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

/// Pixel intensities in [0,1], stored as channel planes (row-major within a
/// plane). A Perturbation is the same flat layout, added elementwise.
template <typename Scalar>
struct Image {
  ArrX<Scalar> data;
  Shape shape;

  Image() = default;
  Image(ArrX<Scalar> values, Shape s) : data(std::move(values)), shape(s) {
    if (data.size() != s.size())
      throw std::invalid_argument("Image: data size " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + s.str());
  }

  static Image zeros(Shape s) { return Image(ArrX<Scalar>::Zero(s.size()), s); }

  int size() const { return static_cast<int>(data.size()); }
  bool empty() const { return data.size() == 0; }

  auto channel(int c) const { return data.segment(c * shape.pixels_per_channel(), shape.pixels_per_channel()); }
  auto channel(int c) { return data.segment(c * shape.pixels_per_channel(), shape.pixels_per_channel()); }

  template <typename Other>
  Image<Other> cast() const {
    return Image<Other>(data.template cast<Other>(), shape);
  }
};

template <typename Scalar>
void require_same_shape(const Image<Scalar>& a, const Image<Scalar>& b,
                        const char* where) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(where) + ": shape mismatch (" +
                                a.shape.str() + " vs " + b.shape.str() + ")");
  if (a.empty()) throw std::invalid_argument(std::string(where) + ": empty image");
}

/// Clips x + delta into [0,1]^n and returns the adjusted perturbation.
template <typename Scalar>
ArrX<Scalar> clip_to_box(const ArrX<Scalar>& x, const ArrX<Scalar>& delta) {
  return (x + delta).cwiseMax(Scalar(0)).cwiseMin(Scalar(1)) - x;
}

}  // namespace ssimadv
