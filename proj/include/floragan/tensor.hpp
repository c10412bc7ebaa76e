#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <ostream>
#include <string>

#include "floragan/errors.hpp"

namespace floragan {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  int plane() const { return height * width; }
  bool valid() const { return channels >= 1 && height >= 1 && width >= 1; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

// A C x H x W block stored as a row-major (C, H*W) matrix: one row per channel plane.
// Weight matrices and attention maps reuse the same storage with height = 1.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(MatrixType::Zero(shape.channels, shape.plane())) {}
  Tensor(Shape shape, MatrixType data) : shape_(shape), data_(std::move(data)) {
    if (data_.rows() != shape.channels || data_.cols() != shape.plane())
      throw ShapeError("tensor storage " + std::to_string(data_.rows()) + "x" +
                       std::to_string(data_.cols()) + " does not match shape " + to_string(shape));
  }
  Tensor(int channels, int height, int width) : Tensor(Shape{channels, height, width}) {}

  static Tensor constant(Shape shape, Scalar value) {
    return Tensor(shape, MatrixType::Constant(shape.channels, shape.plane(), value));
  }
  // (rows x cols) matrix viewed as rows x 1 x cols.
  static Tensor from_matrix(MatrixType m) {
    Shape s{static_cast<int>(m.rows()), 1, static_cast<int>(m.cols())};
    return Tensor(s, std::move(m));
  }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return shape_.size(); }
  bool empty() const { return shape_.size() == 0; }

  MatrixType& matrix() { return data_; }
  const MatrixType& matrix() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  auto flat() { return Eigen::Map<Vector<Scalar>>(data_.data(), data_.size()); }
  auto flat() const { return Eigen::Map<const Vector<Scalar>>(data_.data(), data_.size()); }

  Scalar& operator()(int c, int y, int x) { return data_(c, y * shape_.width + x); }
  Scalar operator()(int c, int y, int x) const { return data_(c, y * shape_.width + x); }

  // Same storage, new logical shape (sizes must agree).
  Tensor reshaped(Shape shape) const {
    if (shape.size() != size()) throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    MatrixType m = Eigen::Map<const MatrixType>(data_.data(), shape.channels, shape.plane());
    return Tensor(shape, std::move(m));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_{};
  MatrixType data_;
};

enum class ValueRange { raw01, normalized };

/// An image tensor tagged with the value range it lives in.
template <typename Scalar>
struct Image {
  Tensor<Scalar> pixels;
  ValueRange range = ValueRange::raw01;

  const Shape& shape() const { return pixels.shape(); }
};

using ImageTensor = Image<float>;

template <typename Scalar>
bool within_range(const Tensor<Scalar>& t, Scalar lo, Scalar hi) {
  if (t.empty()) return true;
  return t.matrix().minCoeff() >= lo && t.matrix().maxCoeff() <= hi;
}

// Validates shape and the [-1,1] bound implied by the normalized tag.
template <typename Scalar>
void check_image(const Image<Scalar>& img) {
  if (!img.pixels.shape().valid()) throw ShapeError("image has empty shape " + to_string(img.pixels.shape()));
  if (img.range == ValueRange::normalized && !within_range(img.pixels, Scalar(-1), Scalar(1)))
    throw DomainError("normalized image has values outside [-1, 1]");
  if (img.range == ValueRange::raw01 && !within_range(img.pixels, Scalar(0), Scalar(1)))
    throw DomainError("raw image has values outside [0, 1]");
}

}  // namespace floragan
