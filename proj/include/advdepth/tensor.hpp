#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advdepth {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

/// Raised when tensor extents disagree. `axis` names the offending axis.
class DimensionError : public std::runtime_error {
 public:
  DimensionError(const std::string& axis, const std::string& detail)
      : std::runtime_error("dimension error on " + axis + ": " + detail),
        axis_(axis) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where finite numbers are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline Index shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major N-d array. Storage is a contiguous Eigen column array so
/// Eigen expressions and Maps apply directly to the payload.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_ = Array::Zero(shape_numel(shape_));
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_numel(shape_))
      throw DimensionError("size", "shape " + shape_str(shape_) + " needs " +
                                       std::to_string(shape_numel(shape_)) + " elements, got " +
                                       std::to_string(data_.size()));
  }

  /// Construction that rejects NaN/Inf payloads.
  static Tensor checked(Shape shape, Array data) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) throw NumericError("non-finite value in tensor " + shape_str(t.shape_));
    return t;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) a[i++] = v;
    return Tensor(std::move(shape), std::move(a));
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw DimensionError("axis", "axis out of range for " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  const Array& array() const noexcept { return data_; }
  Array& array() noexcept { return data_; }
  const Scalar* data() const noexcept { return data_.data(); }
  Scalar* data() noexcept { return data_.data(); }

  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  Scalar at(Index c, Index y, Index x) const {
    return data_[(c * shape_[rank() - 2] + y) * shape_[rank() - 1] + x];
  }
  Scalar& at(Index c, Index y, Index x) {
    return data_[(c * shape_[rank() - 2] + y) * shape_[rank() - 1] + x];
  }

  bool all_finite() const { return data_.isFinite().all(); }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != size())
      throw DimensionError("size", "cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>());
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && (data_ == o.data_).all();
  }

 private:
  void validate_shape() const {
    for (std::size_t i = 0; i < shape_.size(); ++i)
      if (shape_[i] < 1)
        throw DimensionError("axis " + std::to_string(i), "extent must be positive in " + shape_str(shape_));
  }

  Shape shape_;
  Array data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename Scalar>
Scalar inner(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("shape", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return (a.array() * b.array()).sum();
}

}  // namespace advdepth
