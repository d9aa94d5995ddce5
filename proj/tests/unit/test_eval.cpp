#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "opflow/eval.hpp"
#include "support/tiny_data.hpp"

namespace opflow {
namespace {

HyperModel exact_identity(const FnoConfig& fno) {
  HyperConfig h;
  h.output_init_scale = 0.0;
  h.identity_noise = 0.0;
  return init_hyper_model(fno, h, 1);
}

/// Every snapshot equals the initial condition, so the identity map is exact.
Dataset steady_dataset() {
  Dataset ds = testing::tiny_test();
  const std::size_t block = ds.field_size();
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t s = 1; s < ds.snapshots(); ++s)
      std::copy_n(ds.fields.raw() + i * ds.snapshots() * block, block,
                  ds.fields.raw() + (i * ds.snapshots() + s) * block);
  return ds;
}

std::string read_first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

TEST(Percentile, NearestRank) {
  const std::vector<double> v{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  EXPECT_EQ(percentile(v, 10), 1.0);
  EXPECT_EQ(percentile(v, 25), 3.0);
  EXPECT_EQ(percentile(v, 50), 5.0);
  EXPECT_EQ(percentile(v, 75), 8.0);
  EXPECT_EQ(percentile(v, 90), 9.0);
  EXPECT_EQ(percentile(v, 100), 10.0);
  EXPECT_EQ(percentile(v, 0), 1.0);
  EXPECT_THROW(percentile({}, 50), MetricError);
  EXPECT_THROW(percentile(v, 101), ConfigError);
}

TEST(Percentile, Summary) {
  const ErrStats s = summarize({0.4, 0.1, 0.2, 0.3});
  EXPECT_EQ(s.n, 4u);
  EXPECT_NEAR(s.mean, 0.25, 1e-15);
  EXPECT_EQ(s.median, 0.2);
  EXPECT_EQ(s.p90, 0.4);
}

TEST(LinearBaseline, Endpoints) {
  const Array a({2}, std::vector<double>{1.0, 2.0});
  const Array b({2}, std::vector<double>{3.0, -2.0});
  EXPECT_EQ(linear_baseline(a, b, 0.0), a);
  EXPECT_EQ(linear_baseline(a, b, 1.0), b);
  const Array mid = linear_baseline(a, b, 0.25);
  EXPECT_DOUBLE_EQ(mid[0], 1.5);
  EXPECT_DOUBLE_EQ(mid[1], 1.0);
}

TEST(Extrapolation, UnitIntervals) {
  EXPECT_EQ(extrapolation_intervals(0.4), std::vector<double>{0.4});
  EXPECT_EQ(extrapolation_intervals(1.0), std::vector<double>{1.0});
  EXPECT_EQ(extrapolation_intervals(2.0), (std::vector<double>{1.0, 1.0}));
  const auto pieces = extrapolation_intervals(2.3);
  ASSERT_EQ(pieces.size(), 3u);
  EXPECT_EQ(pieces[0], 1.0);
  EXPECT_EQ(pieces[1], 1.0);
  EXPECT_NEAR(pieces[2], 0.3, 1e-12);
  EXPECT_EQ(extrapolation_intervals(1.0 + 1e-12), std::vector<double>{1.0});
  EXPECT_THROW(extrapolation_intervals(-0.1), ConfigError);
}

TEST(Extrapolation, ChainsPropagator) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 2);
  const Field v0 = testing::tiny_test().at(0, 0);
  const Field direct = propagate(m, propagate(m, propagate(m, v0, 1.0), 1.0), 0.5);
  EXPECT_EQ(extrapolate(m, v0, 2.5).values, direct.values);
}

TEST(Eval, ExactOperatorHasZeroError) {
  const Dataset ds = steady_dataset();
  const HyperModel m = exact_identity(testing::tiny_model());
  const EvalReport r = sweep_intermediate(m, ds, 0.25, 1.0);
  ASSERT_EQ(r.sweep.size(), 5u);
  for (const auto& row : r.sweep) {
    EXPECT_LT(row.model.p90, 1e-13) << row.time;
    EXPECT_EQ(row.linear.p90, 0.0);
  }
  EXPECT_EQ(r.energy_increases, 0u);
  for (double g : composition_gaps(m, ds, 0.5, 0.5)) EXPECT_LT(g, 1e-13);
  for (double e : initial_errors(m, ds)) EXPECT_LT(e, 1e-13);
}

TEST(Eval, SweepAtTMatchesEvalAtT) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 3);
  const Dataset& ds = testing::tiny_test();
  const EvalReport r = sweep_intermediate(m, ds, 0.25, 1.0, &m);
  const ErrStats at_t = eval_at_T(m, ds);
  EXPECT_EQ(r.sweep.back().model.median, at_t.median);
  EXPECT_EQ(r.at_T.mean, at_t.mean);
  EXPECT_EQ(r.sweep.back().reference->median, at_t.median);
  EXPECT_EQ(r.sweep.front().linear.median, 0.0);
  EXPECT_EQ(r.sweep.back().linear.median, 0.0);
}

TEST(Eval, LinearBaselineErrorAgainstOracle) {
  const Dataset& ds = testing::tiny_test();
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 3);
  const EvalReport r = sweep_intermediate(m, ds, 0.25, 1.0);
  std::vector<double> errs;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Field v0 = ds.at(i, 0), v1 = ds.at(i, 4), truth = ds.at(i, 2);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < 32; ++j) {
      const double pred = 0.5 * v0.values[j] + 0.5 * v1.values[j];
      num += (pred - truth.values[j]) * (pred - truth.values[j]);
      den += truth.values[j] * truth.values[j];
    }
    errs.push_back(std::sqrt(num / den));
  }
  std::sort(errs.begin(), errs.end());
  EXPECT_NEAR(r.sweep[2].linear.median, errs[1], 1e-14);
}

TEST(Eval, SweepTimes) {
  EXPECT_EQ(sweep_times(0.25, 1.0), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(sweep_times(0.4, 1.0).back(), 1.0);
  EXPECT_EQ(sweep_times(0.4, 1.0).size(), 4u);
  EXPECT_THROW(sweep_times(0.0, 1.0), ConfigError);
}

TEST(Eval, ExtrapolationNeedsCoverage) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 3);
  EXPECT_THROW(sweep_intermediate(m, testing::tiny_test(), 0.25, 2.0), CoverageError);
}

TEST(Eval, EmitWritesAllArtifacts) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 4);
  const auto dir = std::filesystem::temp_directory_path() / "opflow-eval-emit";
  std::filesystem::remove_all(dir);
  emit(sweep_intermediate(m, testing::tiny_test(), 0.25, 1.0, &m), dir);
  EXPECT_EQ(read_first_line(dir / "sweep.csv"),
            "time,p10,p25,p50,p75,p90,mean,linear_p50,linear_mean,reference_p50,reference_mean");
  EXPECT_EQ(read_first_line(dir / "summary.csv"), "metric,value");
  EXPECT_EQ(read_first_line(dir / "energy.csv"), "time,sample,truth_energy,model_energy,model_increased");
  EXPECT_TRUE(std::filesystem::exists(dir / "plot_sweep.py"));
}

TEST(Eval, PercentilesOrderedAtEveryTime) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 5);
  for (const auto& row : sweep_intermediate(m, testing::tiny_test(), 0.25, 1.0).sweep) {
    EXPECT_LE(row.model.p10, row.model.p25);
    EXPECT_LE(row.model.p25, row.model.median);
    EXPECT_LE(row.model.median, row.model.p75);
    EXPECT_LE(row.model.p75, row.model.p90);
  }
}

TEST(Eval, UnitExtrapolationMatchesDirect) {
  const HyperModel m = init_hyper_model(testing::tiny_model(), {}, 6);
  const Field v0 = testing::tiny_test().at(1, 0);
  EXPECT_EQ(extrapolate(m, v0, 1.0).values, propagate(m, v0, 1.0).values);
  EXPECT_EQ(extrapolate(m, v0, 2.0).values, propagate(m, propagate(m, v0, 1.0), 1.0).values);
}

}  // namespace
}  // namespace opflow
