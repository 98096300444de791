#ifndef DOCCLF_TENSOR_HPP
#define DOCCLF_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace docclf {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown for any shape/extent contract violation.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline std::string to_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index num_elements(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major n-dimensional array. Storage is a flat Eigen column
/// array, so whole-tensor arithmetic goes through Eigen expressions and 2-D
/// slices can be mapped as row-major matrices.
template <typename Scalar_>
class Tensor {
public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    data_ = Array::Zero(num_elements(shape_));
  }

  Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (num_elements(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + to_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) a[i++] = v;
    return Tensor(std::move(shape), std::move(a));
  }

  template <typename Rng>
  static Tensor normal(Shape shape, Scalar stddev, Rng &rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(dist(rng));
    return t;
  }

  template <typename Rng>
  static Tensor uniform(Shape shape, Scalar lo, Scalar hi, Rng &rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(dist(rng));
    return t;
  }

  bool empty() const { return shape_.empty(); }
  const Shape &shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const {
    if (axis < 0) axis += rank();
    return shape_.at(static_cast<std::size_t>(axis));
  }
  Index size() const { return data_.size(); }

  Array &array() { return data_; }
  const Array &array() const { return data_; }
  Scalar *data() { return data_.data(); }
  const Scalar *data() const { return data_.data(); }

  Scalar &operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Idx>
  Scalar &at(Idx... idx) {
    return data_[offset({static_cast<Index>(idx)...})];
  }
  template <typename... Idx>
  Scalar at(Idx... idx) const {
    return data_[offset({static_cast<Index>(idx)...})];
  }

  /// Row-major matrix view of the whole buffer.
  Eigen::Map<RowMatrix<Scalar>> matrix(Index rows, Index cols) {
    if (rows * cols != size()) throw DimensionError("matrix view does not cover tensor");
    return {data(), rows, cols};
  }
  Eigen::Map<const RowMatrix<Scalar>> matrix(Index rows, Index cols) const {
    if (rows * cols != size()) throw DimensionError("matrix view does not cover tensor");
    return {data(), rows, cols};
  }

  Tensor reshaped(Shape shape) const {
    if (num_elements(shape) != size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

private:
  void check_extents() const {
    for (Index e : shape_) {
      if (e <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape_));
    }
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) throw DimensionError("index rank mismatch");
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  Array data_;
};

/// Order-sensitive FNV-1a digest over the raw bytes; used to compare
/// parameter state across replicas and runs.
template <typename Scalar>
std::uint64_t checksum(const Tensor<Scalar> &t, std::uint64_t seed = 1469598103934665603ULL) {
  const auto *bytes = reinterpret_cast<const unsigned char *>(t.data());
  const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(Scalar);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

} // namespace docclf

#endif // DOCCLF_TENSOR_HPP
