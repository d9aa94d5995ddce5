#pragma once

// Radix-2 complex FFT. Forward transform is unnormalized, the inverse applies 1/n.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "opflow/array.hpp"

namespace opflow::fft {

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

inline void require_power_of_two(std::size_t n, const char* who) {
  if (!is_power_of_two(n)) {
    throw ConfigError(std::string(who) + ": extent " + std::to_string(n) + " is not a power of two");
  }
}

enum class Direction { forward, inverse };

/// Precomputed twiddles and bit-reversal table for one length.
class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n) {
    require_power_of_two(n, "fft::Plan");
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = Complex(std::cos(angle), std::sin(angle));
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }

  std::size_t size() const noexcept { return n_; }

  /// In-place transform of a contiguous line. The inverse is normalized only
  /// when `normalize` is true.
  void execute(std::span<Complex> x, Direction dir, bool normalize = true) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    }
    const bool inverse = dir == Direction::inverse;
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          Complex w = twiddle_[j * step];
          if (inverse) w = std::conj(w);
          const Complex u = x[start + j];
          const Complex v = x[start + j + half] * w;
          x[start + j] = u + v;
          x[start + j + half] = u - v;
        }
      }
    }
    if (inverse && normalize) {
      const double s = 1.0 / static_cast<double>(n_);
      for (auto& c : x) c *= s;
    }
  }

 private:
  std::size_t n_;
  std::vector<Complex> twiddle_;
  std::vector<std::size_t> bitrev_;
};

/// Transform along one axis of a row-major complex block with extents `dims`.
inline void transform_axis(std::span<Complex> data, std::span<const std::size_t> dims, std::size_t axis,
                           Direction dir, bool normalize = true) {
  const std::size_t n = dims[axis];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < dims.size(); ++a) inner *= dims[a];
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
  if (n == 1) return;
  const Plan plan(n);
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) plan.execute(data.subspan(o * n, n), dir, normalize);
    return;
  }
  std::vector<Complex> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      Complex* base = data.data() + o * n * inner + i;
      for (std::size_t k = 0; k < n; ++k) line[k] = base[k * inner];
      plan.execute(line, dir, normalize);
      for (std::size_t k = 0; k < n; ++k) base[k * inner] = line[k];
    }
  }
}

/// Multi-dimensional transform over every axis of `dims`.
inline void transform(std::span<Complex> data, std::span<const std::size_t> dims, Direction dir,
                      bool normalize = true) {
  for (std::size_t a = 0; a < dims.size(); ++a) transform_axis(data, dims, a, dir, normalize);
}

/// Signed wavenumber for index i on an n-point periodic grid.
constexpr long wavenumber(std::size_t i, std::size_t n) noexcept {
  return i <= n / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(n);
}

}  // namespace opflow::fft
