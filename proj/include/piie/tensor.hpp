#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "piie/errors.hpp"

namespace piie {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Dense shape of rank 0..3. Every tensor also has a matrix view: rank 0 is
// 1x1, rank 1 [n] is a 1xn row, rank 3 [a,b,c] is (a*b)xc.
class Shape {
 public:
  static constexpr std::size_t max_rank = 3;

  Shape() = default;

  Shape(std::initializer_list<std::size_t> dims) {
    if (dims.size() > max_rank) throw DimensionError("rank above 3 is not supported");
    std::copy(dims.begin(), dims.end(), dims_.begin());
    rank_ = dims.size();
  }

  explicit Shape(std::span<const std::size_t> dims) {
    if (dims.size() > max_rank) throw DimensionError("rank above 3 is not supported");
    std::copy(dims.begin(), dims.end(), dims_.begin());
    rank_ = dims.size();
  }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  std::size_t rows() const {
    switch (rank_) {
      case 0:
      case 1: return 1;
      case 2: return dims_[0];
      default: return dims_[0] * dims_[1];
    }
  }

  std::size_t cols() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  std::array<std::size_t, max_rank> dims_{};
  std::size_t rank_ = 0;
};

// Owning dense row-major array of doubles. A default-constructed tensor is
// empty (holds no storage); that state marks an absent gradient.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.numel(), fill) {}

  Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel())
      throw DimensionError("tensor of shape " + shape_.str() + " given " +
                           std::to_string(data_.size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor(Shape{v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}); }

  // Row-by-row initializer: matrix({{1,2},{3,4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix initializer");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(flat));
  }

  static Tensor identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.rows(); }
  std::size_t cols() const { return shape_.cols(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  MatrixMap mat() {
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  }
  ConstMatrixMap mat() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(cols()));
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor row(std::size_t r) const {
    Tensor out(Shape{1, cols()});
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols()), cols(), out.data_.begin());
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw DimensionError("compare " + a.shape().str() + " with " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace piie
