#pragma once

// Initial-condition samplers: 1-D Gaussian random fields with a power-law
// spectrum and 2-D Gaussian processes with a separable periodic kernel.
// Both synthesize spectrally, so every sample is exactly periodic.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "opflow/fft.hpp"
#include "opflow/field.hpp"
#include "opflow/random.hpp"

namespace opflow {

/// Eigenvalues scale * (k^2 + shift)^(-exponent) of the covariance operator,
/// i.e. N(0, scale (-Laplacian + shift I)^(-exponent)).
struct GrfSpectrum {
  double scale = 625.0;
  double shift = 25.0;
  double exponent = 2.0;

  double eigenvalue(double k) const { return scale * std::pow(k * k + shift, -exponent); }
  void validate() const {
    if (!(scale > 0.0) || !(shift >= 0.0) || !(exponent > 0.0)) throw ConfigError("GrfSpectrum: invalid parameters");
  }
};

/// k(x,y;x',y') = sigma^2 exp(-2 sin^2(|x-x'|/2)/l^2) exp(-2 sin^2(|y-y'|/2)/l^2)
struct GpKernelConfig {
  double sigma = 1.0;
  double ell = 0.6;

  void validate() const {
    if (!(sigma > 0.0) || !(ell > 0.0)) throw ConfigError("GpKernelConfig: sigma and ell must be positive");
  }

  double operator()(double dx, double dy) const {
    const double sx = std::sin(std::abs(dx) / 2.0);
    const double sy = std::sin(std::abs(dy) / 2.0);
    return sigma * sigma * std::exp(-2.0 * sx * sx / (ell * ell)) * std::exp(-2.0 * sy * sy / (ell * ell));
  }
};

/// Hermitian DFT coefficients (unnormalized convention) of a zero-mean GRF
/// draw. The k = 0 and Nyquist modes are zero.
inline std::vector<Complex> grf_spectrum_1d(const Grid& grid, std::uint64_t seed, const GrfSpectrum& spectrum) {
  grid.validate();
  if (grid.d != 1) throw ConfigError("sample_grf_1d requires a 1-D grid");
  spectrum.validate();
  const std::size_t n = grid.n;
  std::vector<Complex> coeffs(n);
  Rng rng(seed);
  const double nn = static_cast<double>(n);
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double amp = nn * std::sqrt(spectrum.eigenvalue(static_cast<double>(k)) / (2.0 * std::numbers::pi));
    const double re = rng.normal();
    const double im = rng.normal();
    const Complex c = amp * Complex(re, im) / std::numbers::sqrt2;
    coeffs[k] = c;
    coeffs[n - k] = std::conj(c);
  }
  return coeffs;
}

inline Field sample_grf_1d(const Grid& grid, std::uint64_t seed, const GrfSpectrum& spectrum = {}) {
  std::vector<Complex> c = grf_spectrum_1d(grid, seed, spectrum);
  fft::Plan(grid.n).execute(c, fft::Direction::inverse);
  Field out(grid, 1);
  for (std::size_t i = 0; i < grid.n; ++i) out.values[i] = c[i].real();
  return out;
}

/// Eigenvalues of the circulant covariance built from a stationary kernel
/// k(dx, dy) on the 2-D grid (the kernel's DFT). Normalized coefficients below
/// -1e-12 raise KernelError; small negatives are clamped.
template <class Kernel>
std::vector<double> circulant_spectrum(const Grid& grid, const Kernel& kernel) {
  grid.validate();
  if (grid.d != 2) throw ConfigError("circulant_spectrum requires a 2-D grid");
  const std::size_t n = grid.n;
  std::vector<Complex> row(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) row[i * n + j] = kernel(grid.coordinate(i), grid.coordinate(j));
  const std::size_t dims[2] = {n, n};
  fft::transform(row, dims, fft::Direction::forward);
  const double points = static_cast<double>(n * n);
  std::vector<double> lambda(n * n);
  for (std::size_t k = 0; k < n * n; ++k) {
    const double normalized = row[k].real() / points;
    if (normalized < -1e-12) {
      throw KernelError("kernel has negative Fourier coefficient " + std::to_string(normalized) +
                        " (not positive semi-definite on this grid)");
    }
    lambda[k] = std::max(row[k].real(), 0.0);
  }
  return lambda;
}

inline std::vector<double> periodic_kernel_spectrum(const Grid& grid, const GpKernelConfig& cfg) {
  cfg.validate();
  return circulant_spectrum(grid, cfg);
}

/// One GP draw: white noise filtered by sqrt of the kernel spectrum.
inline Field sample_gp_2d_periodic(const Grid& grid, const GpKernelConfig& cfg, std::uint64_t seed) {
  const std::vector<double> lambda = periodic_kernel_spectrum(grid, cfg);
  const std::size_t n = grid.n;
  Rng rng(seed);
  std::vector<Complex> z(n * n);
  for (auto& c : z) c = rng.normal();
  const std::size_t dims[2] = {n, n};
  fft::transform(z, dims, fft::Direction::forward);
  for (std::size_t k = 0; k < n * n; ++k) z[k] *= std::sqrt(lambda[k]);
  fft::transform(z, dims, fft::Direction::inverse);
  Field out(grid, 1);
  for (std::size_t k = 0; k < n * n; ++k) out.values[k] = z[k].real();
  return out;
}

/// Two independent GP draws as the components of a 2-D velocity field.
inline Field sample_gp_2d_velocity(const Grid& grid, const GpKernelConfig& cfg, std::uint64_t seed) {
  Field out(grid, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    const Field comp = sample_gp_2d_periodic(grid, cfg, derive_seed(seed, "component", c));
    std::copy_n(comp.values.raw(), grid.points(), out.values.raw() + c * grid.points());
  }
  return out;
}

}  // namespace opflow
