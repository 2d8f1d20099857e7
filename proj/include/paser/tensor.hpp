#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace paser {

/// Dimension list of a dense tensor. An empty shape denotes a scalar.
using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

/// Dense row-major tensor over a floating-point scalar. Rank 0..4 is what the
/// pipeline uses: scalars, bias vectors, label maps, CHW activations and
/// OIHW convolution weights.
template <typename Scalar_>
struct Tensor {
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(Array::Zero(shape_size(shape))) {}
  Tensor(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != data.size())
      throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor constant(Shape s, Scalar v) {
    Tensor t(std::move(s));
    t.data.setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({}, v); }
  static Tensor from(Shape s, std::initializer_list<Scalar> vals) {
    Tensor t(std::move(s));
    if (static_cast<std::int64_t>(vals.size()) != t.size())
      throw std::invalid_argument("initializer length does not match shape");
    std::copy(vals.begin(), vals.end(), t.data.data());
    return t;
  }

  std::int64_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return data.size() == 1; }
  Scalar value() const {
    if (!is_scalar()) throw std::logic_error("value() on non-scalar tensor");
    return data[0];
  }

  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  // Rank-specific indexing, row-major.
  Scalar& at(int i) { return data[i]; }
  Scalar at(int i) const { return data[i]; }
  Scalar& at(int i, int j) { return data[static_cast<std::int64_t>(i) * dim(1) + j]; }
  Scalar at(int i, int j) const { return data[static_cast<std::int64_t>(i) * dim(1) + j]; }
  Scalar& at(int c, int h, int w) {
    return data[(static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w];
  }
  Scalar at(int c, int h, int w) const {
    return data[(static_cast<std::int64_t>(c) * dim(1) + h) * dim(2) + w];
  }

  bool all_finite() const { return data.allFinite(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data = data.template cast<U>();
    return out;
  }
};

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMatrixRM = Eigen::Map<MatrixRM<S>>;
template <typename S>
using ConstMapMatrixRM = Eigen::Map<const MatrixRM<S>>;

/// View a tensor's flat storage as a rows x cols row-major matrix.
template <typename S>
MapMatrixRM<S> as_matrix(Tensor<S>& t, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != t.size()) throw std::invalid_argument("matrix view size mismatch");
  return MapMatrixRM<S>(t.data.data(), rows, cols);
}
template <typename S>
ConstMapMatrixRM<S> as_matrix(const Tensor<S>& t, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != t.size()) throw std::invalid_argument("matrix view size mismatch");
  return ConstMapMatrixRM<S>(t.data.data(), rows, cols);
}

}  // namespace paser
