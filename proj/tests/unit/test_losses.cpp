#include <gtest/gtest.h>

#include "opflow/losses.hpp"
#include "support/semigroup_double.hpp"

namespace opflow {
namespace {

Batch random_batch(std::size_t b, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Batch out{Array({b, 1, n}), Array({b, 1, n})};
  for (auto& x : out.v0.storage()) x = rng.normal();
  for (auto& x : out.vT.storage()) x = rng.normal();
  return out;
}

TEST(Err, UnitExamples) {
  const std::vector<double> b{1.5, -2.0, 0.25};
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(err(b, b), 0.0);
  EXPECT_NEAR(err(zero, b), 1.0, 1e-12);
  EXPECT_NEAR(err(std::vector<double>{3.0, 4.0}, std::vector<double>{0.0, 4.0}), 0.75, 1e-12);
}

TEST(Err, ZeroReferenceRaises) {
  EXPECT_THROW(err(std::vector<double>{1.0}, std::vector<double>{0.0}), MetricError);
  EXPECT_THROW(err(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), DimensionError);
}

TEST(Err, ScaleInvariant) {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{1.5, 1.0, 2.0};
  std::vector<double> a2, b2;
  for (double x : a) a2.push_back(7.0 * x);
  for (double x : b) b2.push_back(7.0 * x);
  EXPECT_NEAR(err(a, b), err(a2, b2), 1e-14);
}

TEST(SemigroupDouble, LossesAreExact) {
  const Batch batch = random_batch(4, 16, 1);
  Rng rng(2);
  const TimeSamplePlan plan = sample_plan(rng, 4, 4);
  Tape tape;
  testing::ExpDecayPropagator prop;
  EXPECT_EQ(loss_initial(prop, tape, batch).value()[0], 0.0);
  EXPECT_EQ(loss_inter(prop, tape, batch, plan).value()[0], 0.0);
  // Every partition reaches T, so each p-fold composition equals the final term.
  const double final = loss_final(prop, tape, batch).value()[0];
  EXPECT_GT(final, 0.0);
  EXPECT_NEAR(loss_comp(prop, tape, batch, plan).value()[0], 3.0 * final, 1e-12);

  Rng rng2(3);
  const TimeSamplePlan plan2 = sample_plan(rng2, 4, 2);
  EXPECT_NEAR(loss_comp(prop, tape, batch, plan2).value()[0], final, 1e-12);
}

TEST(SemigroupDouble, UntrackedProductAgreesToRounding) {
  const Batch batch = random_batch(4, 16, 4);
  Rng rng(5);
  const TimeSamplePlan plan = sample_plan(rng, 4, 2);
  Tape tape;
  testing::ExpDecayPropagator prop(false);
  EXPECT_LT(loss_inter(prop, tape, batch, plan).value()[0], 1e-15);
}

TEST(SemigroupDouble, TotalLossSkipsZeroWeights) {
  const Batch batch = random_batch(2, 8, 6);
  Rng rng(7);
  const TimeSamplePlan plan = sample_plan(rng, 2, 2);
  Tape tape;
  testing::ExpDecayPropagator prop;
  const LossTerms terms = total_loss(prop, tape, batch, LossWeights{2.0, 0.0, 1.0, 0.5}, plan);
  EXPECT_EQ(terms.initial, 0.0);
  EXPECT_EQ(terms.inter, 0.0);
  EXPECT_NEAR(terms.total.value()[0], 2.0 * terms.final + 0.5 * terms.comp, 1e-14);
}

TEST(TimePlans, InterTimesStayInRange) {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const InterTimes t = sample_inter_times(rng, 1.0);
    ASSERT_GE(t.t1, 0.0);
    ASSERT_GE(t.t2, 0.0);
    ASSERT_LE(t.t1 + t.t2, 1.0);
  }
}

TEST(TimePlans, PartitionsArePositiveAndSumToHorizon) {
  Rng rng(12);
  for (int p = 1; p <= 4; ++p) {
    for (int i = 0; i < 10000; ++i) {
      const auto d = sample_partition(rng, p, 1.0);
      ASSERT_EQ(d.size(), static_cast<std::size_t>(p));
      double s = 0.0;
      double breakpoint = 0.0;
      for (int j = 0; j < p; ++j) {
        ASSERT_GT(d[j], 0.0);
        s += d[j];
        breakpoint += d[j];
        // The j-th breakpoint lies in [j/p, (j+1)/p].
        if (j + 1 < p) {
          ASSERT_GE(breakpoint, static_cast<double>(j) / p - 1e-12);
          ASSERT_LE(breakpoint, static_cast<double>(j + 1) / p + 1e-12);
        }
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(TimePlans, InterTotalIsUniform) {
  // T~ ~ U[0, 1]: mean 1/2; t1 | T~ ~ U[0, T~]: E[t1] = 1/4.
  Rng rng(13);
  double total = 0.0, t1 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const InterTimes t = sample_inter_times(rng, 1.0);
    total += t.t1 + t.t2;
    t1 += t.t1;
  }
  EXPECT_NEAR(total / n, 0.5, 0.005);
  EXPECT_NEAR(t1 / n, 0.25, 0.005);
}

TEST(TimePlans, PlanShapeAndTimes) {
  Rng rng(14);
  const TimeSamplePlan plan = sample_plan(rng, 3, 3);
  ASSERT_EQ(plan.inter.size(), 3u);
  ASSERT_EQ(plan.comp.size(), 3u);
  ASSERT_EQ(plan.comp[0].size(), 2u);
  EXPECT_EQ(plan.comp[0][1].size(), 3u);
  const auto baseline_times = plan.times(LossWeights::baseline());
  EXPECT_EQ(baseline_times, std::vector<double>{1.0});
  EXPECT_EQ(sample_plan(rng, 2, 1).comp[0].size(), 0u);
  EXPECT_THROW(sample_plan(rng, 2, 0), ConfigError);
}

TEST(LossWeights, Presets) {
  EXPECT_EQ(LossWeights::from_preset("default"), (LossWeights{1.0, 1.0, 1.0, 1.0}));
  EXPECT_EQ(LossWeights::from_preset("3d"), (LossWeights{1.0, 1.0, 0.1, 1.0}));
  EXPECT_EQ(LossWeights::from_preset("baseline"), (LossWeights{1.0, 0.0, 0.0, 0.0}));
  EXPECT_THROW(LossWeights::from_preset("other"), ConfigError);
  EXPECT_THROW((LossWeights{0.0, 0.0, 0.0, 0.0}).validate(), ConfigError);
  EXPECT_THROW((LossWeights{-1.0, 0.0, 0.0, 0.0}).validate(), ConfigError);
}

TEST(Losses, SumReductionScalesMean) {
  const Batch batch = random_batch(4, 8, 15);
  Tape tape;
  testing::ExpDecayPropagator prop;
  const double m = loss_final(prop, tape, batch, 1.0, Reduction::mean).value()[0];
  const double s = loss_final(prop, tape, batch, 1.0, Reduction::sum).value()[0];
  EXPECT_NEAR(s, 4.0 * m, 1e-13);
}

TEST(Losses, PlanMustMatchBatch) {
  const Batch batch = random_batch(4, 8, 16);
  Rng rng(17);
  const TimeSamplePlan plan = sample_plan(rng, 3, 2);
  Tape tape;
  testing::ExpDecayPropagator prop;
  EXPECT_THROW(loss_inter(prop, tape, batch, plan), ContractError);
  EXPECT_THROW(loss_comp(prop, tape, batch, plan), ContractError);
}

}  // namespace
}  // namespace opflow
