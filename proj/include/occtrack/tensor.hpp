#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace occtrack {

/// Raised whenever operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline Eigen::Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                         [](Eigen::Index a, int b) { return a * b; });
}

/// Binary grid / label grid indexed (y, x).
using ByteGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major tensor of up to four axes backed by an Eigen array.
///
/// Spatial tensors use the [channel, y, x] layout; kernels use
/// [out, in, ky, kx]. A scalar is stored with shape [1].
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_rank();
    data_ = Array::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) { return constant({1}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  Scalar& operator()(int c, int y, int x) { return data_[offset3(c, y, x)]; }
  Scalar operator()(int c, int y, int x) const { return data_[offset3(c, y, x)]; }

  Scalar& operator()(int o, int i, int y, int x) { return data_[offset4(o, i, y, x)]; }
  Scalar operator()(int o, int i, int y, int x) const { return data_[offset4(o, i, y, x)]; }

  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
    return data_[0];
  }

  /// View as a (dim(0), rest) row-major matrix; spatial tensors become (C, H*W).
  MatrixMap matrix() { return MatrixMap(data(), leading(), data_.size() / std::max<Eigen::Index>(1, leading())); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data(), leading(), data_.size() / std::max<Eigen::Index>(1, leading()));
  }

  /// Same data with a different shape of equal element count.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  void check_rank() const {
    if (shape_.empty() || shape_.size() > 4) throw ShapeError("tensor rank must be 1..4, got " + to_string(shape_));
    for (int d : shape_)
      if (d < 0) throw ShapeError("negative dimension in " + to_string(shape_));
  }
  Eigen::Index leading() const { return shape_.empty() ? 0 : shape_[0]; }
  Eigen::Index offset3(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * shape_[1] + y) * shape_[2] + x;
  }
  Eigen::Index offset4(int o, int i, int y, int x) const {
    return ((static_cast<Eigen::Index>(o) * shape_[1] + i) * shape_[2] + y) * shape_[3] + x;
  }

  Shape shape_;
  Array data_;
};

/// Shapes compare equal once leading unit axes are dropped ([1,M,M] ~ [M,M]).
inline bool same_spatial(const Shape& a, const Shape& b) {
  auto strip = [](const Shape& s) {
    std::size_t i = 0;
    while (i + 1 < s.size() && s[i] == 1) ++i;
    return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
  };
  return strip(a) == strip(b);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

/// Lifts a byte grid into a [1, rows, cols] tensor.
template <typename Scalar>
Tensor<Scalar> to_tensor(const ByteGrid& grid) {
  Tensor<Scalar> t({1, static_cast<int>(grid.rows()), static_cast<int>(grid.cols())});
  for (Eigen::Index y = 0; y < grid.rows(); ++y)
    for (Eigen::Index x = 0; x < grid.cols(); ++x)
      t(0, static_cast<int>(y), static_cast<int>(x)) = static_cast<Scalar>(grid(y, x));
  return t;
}

}  // namespace occtrack
