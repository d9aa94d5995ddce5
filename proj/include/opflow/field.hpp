#pragma once

#include <cmath>
#include <numbers>

#include "opflow/array.hpp"
#include "opflow/fft.hpp"

namespace opflow {

/// Uniform periodic grid on [0, 2pi)^d.
struct Grid {
  int d = 1;
  std::size_t n = 128;

  void validate() const {
    if (d != 1 && d != 2) throw ConfigError("grid dimension must be 1 or 2, got " + std::to_string(d));
    fft::require_power_of_two(n, "grid");
  }

  double spacing() const { return 2.0 * std::numbers::pi / static_cast<double>(n); }
  std::size_t points() const { return d == 1 ? n : n * n; }
  Shape spatial_shape() const { return d == 1 ? Shape{n} : Shape{n, n}; }
  double coordinate(std::size_t i) const { return spacing() * static_cast<double>(i); }

  bool operator==(const Grid&) const = default;
};

/// Sampled periodic field, channels first: values[C, n] or values[C, n, n].
struct Field {
  Grid grid;
  Array values;

  Field() = default;
  Field(Grid g, std::size_t channels) : grid(g), values(shape_for(g, channels)) {}
  Field(Grid g, Array v) : grid(g), values(std::move(v)) {
    if (values.shape() != shape_for(grid, channels())) {
      throw DimensionError("Field: values " + to_string(values.shape()) + " do not match grid");
    }
  }

  std::size_t channels() const { return values.rank() ? values.extent(0) : 0; }

  static Shape shape_for(const Grid& g, std::size_t channels) {
    Shape s{channels};
    const Shape sp = g.spatial_shape();
    s.insert(s.end(), sp.begin(), sp.end());
    return s;
  }
};

/// (grid spacing)^d * sum v^2 / 2 over all channels and points.
inline double energy(const Field& v) {
  double s = 0.0;
  for (double x : v.values.data()) s += x * x;
  return std::pow(v.grid.spacing(), v.grid.d) * 0.5 * s;
}

/// Cyclic shift by `shift` points along the first spatial axis of every channel.
inline Field roll(const Field& v, std::size_t shift) {
  Field out(v.grid, v.channels());
  const std::size_t n = v.grid.n;
  const std::size_t inner = v.grid.d == 1 ? 1 : n;
  shift %= n;
  for (std::size_t c = 0; c < v.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t dst = (i + shift) % n;
      std::copy_n(v.values.raw() + (c * n + i) * inner, inner, out.values.raw() + (c * n + dst) * inner);
    }
  return out;
}

}  // namespace opflow
