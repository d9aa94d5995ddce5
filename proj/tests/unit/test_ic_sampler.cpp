#include <gtest/gtest.h>

#include "opflow/ic_sampler.hpp"
#include "support/oracles.hpp"

namespace opflow {
namespace {

TEST(GrfSampler, DeterministicPerSeed) {
  const Grid grid{1, 64};
  EXPECT_EQ(sample_grf_1d(grid, 4).values, sample_grf_1d(grid, 4).values);
  EXPECT_NE(sample_grf_1d(grid, 4).values, sample_grf_1d(grid, 5).values);
}

TEST(GrfSampler, ZeroMeanPerDraw) {
  const Field v = sample_grf_1d({1, 128}, 2);
  double s = 0.0;
  for (double x : v.values.data()) s += x;
  EXPECT_NEAR(s / 128.0, 0.0, 1e-12);
}

TEST(GrfSampler, PointwiseVarianceMatchesSpectrum) {
  const Grid grid{1, 64};
  const GrfSpectrum spec;
  const double expected = testing::grf_pointwise_variance(grid.n, spec.scale, spec.shift, spec.exponent);
  double acc = 0.0;
  const int draws = 4000;
  for (int s = 0; s < draws; ++s) {
    const Field v = sample_grf_1d(grid, 1000 + s, spec);
    for (double x : v.values.data()) acc += x * x;
  }
  const double measured = acc / (draws * static_cast<double>(grid.n));
  EXPECT_NEAR(measured / expected, 1.0, 0.05);
}

TEST(GrfSampler, RejectsBadInputs) {
  EXPECT_THROW(sample_grf_1d({1, 100}, 1), ConfigError);
  EXPECT_THROW(sample_grf_1d({2, 64}, 1), ConfigError);
  EXPECT_THROW(sample_grf_1d({1, 64}, 1, GrfSpectrum{-1.0, 25.0, 2.0}), ConfigError);
}

TEST(GpSampler, KernelValues) {
  const GpKernelConfig k;
  EXPECT_DOUBLE_EQ(k(0.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(k(0.3, 0.0), k(2.0 * std::numbers::pi - 0.3, 0.0));
  EXPECT_NEAR(k(std::numbers::pi, 0.0), std::exp(-2.0 / 0.36), 1e-15);
}

TEST(GpSampler, SpectrumReproducesKernel) {
  // Inverse DFT of the eigenvalues gives back the kernel row.
  const Grid grid{2, 16};
  const GpKernelConfig cfg;
  const auto lambda = periodic_kernel_spectrum(grid, cfg);
  std::vector<Complex> row(lambda.begin(), lambda.end());
  const std::size_t dims[2] = {16, 16};
  fft::transform(row, dims, fft::Direction::inverse);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      EXPECT_NEAR(row[i * 16 + j].real(), cfg(grid.coordinate(i), grid.coordinate(j)), 1e-12);
}

TEST(GpSampler, PointwiseVarianceIsSigmaSquared) {
  const Grid grid{2, 16};
  const GpKernelConfig cfg{1.5, 0.6};
  double acc = 0.0;
  const int draws = 1500;
  for (int s = 0; s < draws; ++s) {
    const Field v = sample_gp_2d_periodic(grid, cfg, 50 + s);
    for (double x : v.values.data()) acc += x * x;
  }
  EXPECT_NEAR(acc / (draws * 256.0), 2.25, 0.1);
}

TEST(GpSampler, VelocityComponentsIndependent) {
  const Field v = sample_gp_2d_velocity({2, 16}, {}, 3);
  ASSERT_EQ(v.channels(), 2u);
  EXPECT_FALSE(std::equal(v.values.raw(), v.values.raw() + 256, v.values.raw() + 256));
}

TEST(GpSampler, IndefiniteKernelRaises) {
  // Box kernel: its transform has negative sinc side lobes.
  auto box = [](double dx, double dy) {
    const double wx = std::min(dx, 2.0 * std::numbers::pi - dx);
    const double wy = std::min(dy, 2.0 * std::numbers::pi - dy);
    return wx < 1.0 && wy < 1.0 ? 1.0 : 0.0;
  };
  EXPECT_THROW(circulant_spectrum(Grid{2, 32}, box), KernelError);
}

TEST(GpSampler, RejectsBadConfig) {
  EXPECT_THROW(sample_gp_2d_periodic({2, 16}, {0.0, 0.6}, 1), ConfigError);
  EXPECT_THROW(sample_gp_2d_periodic({2, 16}, {1.0, -1.0}, 1), ConfigError);
  EXPECT_THROW(sample_gp_2d_periodic({1, 16}, {}, 1), ConfigError);
}

TEST(GrfSampler, MeanAtOriginIsZero) {
  const Grid grid{1, 64};
  const int draws = 1000;
  const double sd = std::sqrt(testing::grf_pointwise_variance(grid.n, 625.0, 25.0, 2.0));
  double s = 0.0;
  for (int k = 0; k < draws; ++k) s += sample_grf_1d(grid, 7000 + k).values[0];
  EXPECT_LE(std::abs(s / draws), 3.0 * sd / std::sqrt(double(draws)));
}

TEST(GrfSampler, CoefficientsAreHermitian) {
  const Grid grid{1, 64};
  std::vector<Complex> c = grf_spectrum_1d(grid, 3, {});
  EXPECT_EQ(c[0], Complex(0.0));
  EXPECT_EQ(c[32], Complex(0.0));
  for (std::size_t k = 1; k < 32; ++k) EXPECT_EQ(c[64 - k], std::conj(c[k]));
  fft::Plan(64).execute(c, fft::Direction::inverse);
  for (const auto& z : c) EXPECT_LE(std::abs(z.imag()), 1e-12);
}

TEST(GpSampler, CovarianceAtLagPi) {
  const Grid grid{2, 16};
  const GpKernelConfig cfg;
  const int draws = 2000;
  double cov = 0.0;
  for (int s = 0; s < draws; ++s) {
    const Field v = sample_gp_2d_periodic(grid, cfg, 9000 + s);
    cov += v.values[0] * v.values[8 * 16];  // (0, 0) and (pi, 0)
  }
  EXPECT_NEAR(cov / draws, cfg(std::numbers::pi, 0.0), 0.05);
}

}  // namespace
}  // namespace opflow
