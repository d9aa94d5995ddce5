#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opflow/errors.hpp"

namespace opflow {

using Shape = std::vector<std::size_t>;
using Complex = std::complex<double>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array of doubles. Complex arrays carry a trailing extent
/// of 2 holding interleaved (re, im) pairs.
class Array {
 public:
  Array() = default;

  explicit Array(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(numel(shape_), fill) {}

  Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      throw DimensionError("Array: " + std::to_string(data_.size()) +
                           " values do not fill shape " + to_string(shape_));
    }
  }

  static Array zeros_like(const Array& other) { return Array(other.shape_); }

  static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  bool is_complex() const noexcept { return !shape_.empty() && shape_.back() == 2; }

  std::span<Complex> as_complex() {
    require_complex();
    return {reinterpret_cast<Complex*>(data_.data()), data_.size() / 2};
  }
  std::span<const Complex> as_complex() const {
    require_complex();
    return {reinterpret_cast<const Complex*>(data_.data()), data_.size() / 2};
  }

  /// Same data, new shape with the same element count.
  Array reshaped(Shape shape) const& {
    Array out(*this);
    out.reshape(std::move(shape));
    return out;
  }
  void reshape(Shape shape) {
    if (numel(shape) != data_.size()) {
      throw DimensionError("reshape " + to_string(shape_) + " -> " + to_string(shape));
    }
    shape_ = std::move(shape);
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array& operator+=(const Array& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool operator==(const Array& o) const = default;

  void require_same_shape(const Array& o, const char* what) const {
    if (shape_ != o.shape_) {
      throw DimensionError(std::string(what) + ": " + to_string(shape_) + " vs " + to_string(o.shape_));
    }
  }

 private:
  void require_complex() const {
    if (!is_complex()) throw DimensionError("expected complex array, got shape " + to_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// ||a - b|| / ||b||
inline double relative_l2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("relative_l2: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace opflow
