#include <gtest/gtest.h>

#include "opflow/dataset.hpp"
#include "support/tiny_data.hpp"

namespace opflow {
namespace {

TEST(Dataset, ShapesAndTimes) {
  const Dataset& ds = testing::tiny_train();
  EXPECT_EQ(ds.size(), 8u);
  EXPECT_EQ(ds.times, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(ds.fields.shape(), (Shape{8, 5, 1, 32}));
  EXPECT_EQ(ds.batch(4).shape(), (Shape{8, 1, 32}));
  EXPECT_EQ(ds.batch(2, {3, 1}).shape(), (Shape{2, 1, 32}));
}

TEST(Dataset, SamplesMatchDirectSolve) {
  const Dataset& ds = testing::tiny_train();
  const DatasetMeta& m = ds.meta;
  for (std::size_t i : {0u, 5u}) {
    const Field v0 = sample_initial_condition(m, "train", i);
    const auto traj = solve(m.pde, v0, SolveConfig{m.dt, m.save_times()});
    for (std::size_t s = 0; s < ds.snapshots(); ++s) EXPECT_EQ(ds.at(i, s).values, traj[s].field.values);
  }
}

TEST(Dataset, SplitsUseDifferentStreams) {
  EXPECT_NE(testing::tiny_train().at(0, 0).values, testing::tiny_test().at(0, 0).values);
  EXPECT_NE(testing::tiny_train().at(0, 0).values, testing::tiny_train().at(1, 0).values);
}

TEST(Dataset, TimeIndex) {
  const Dataset& ds = testing::tiny_train();
  EXPECT_EQ(ds.time_index(0.5), 2u);
  EXPECT_EQ(ds.time_index(1.0), 4u);
  EXPECT_THROW(ds.time_index(0.3), CoverageError);
  EXPECT_THROW(ds.time_index(1.25), CoverageError);
}

TEST(Dataset, ContainerRoundTrip) {
  const Dataset& ds = testing::tiny_test();
  const Dataset back = dataset_from_container(decode(encode(to_container(ds))));
  EXPECT_EQ(back.fields, ds.fields);
  EXPECT_EQ(back.times, ds.times);
  EXPECT_EQ(back.split, "test");
  EXPECT_EQ(nlohmann::json(back.meta), nlohmann::json(ds.meta));
}

TEST(Dataset, DeclaredSamplesMissingIsTruncated) {
  Container c = to_container(testing::tiny_test());
  c.meta["n"] = 10;
  EXPECT_THROW(dataset_from_container(c), TruncatedError);
}

TEST(Dataset, WrongKindIsFormatError) {
  Container c = to_container(testing::tiny_test());
  c.kind = "checkpoint";
  EXPECT_THROW(dataset_from_container(c), FormatError);
}

TEST(Dataset, PathLayout) {
  EXPECT_EQ(dataset_path("data", PdeKind::gen_burgers, "train"), std::filesystem::path("data/gen-burgers/train.opfl"));
  EXPECT_EQ(dataset_path("d", PdeKind::ns2d, "test"), std::filesystem::path("d/ns2d/test.opfl"));
}

TEST(DatasetMeta, Validation) {
  DatasetMeta m = testing::tiny_meta();
  m.t_max = 1.1;
  EXPECT_THROW(m.validate(), ConfigError);
  m = testing::tiny_meta();
  m.grid = {2, 32};
  EXPECT_THROW(m.validate(), ConfigError);
  m = testing::tiny_meta();
  m.grid = {1, 300};
  EXPECT_THROW(m.validate(), ConfigError);
  m = testing::tiny_meta();
  m.n_test = 0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(DatasetMeta, SnapshotCountTolerantOfRounding) {
  DatasetMeta m = testing::tiny_meta();
  m.t_max = 1.15;
  m.save_dt = 0.01;
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.snapshot_count(), 116u);
}

TEST(Dataset, TwoDimensionalGeneration) {
  DatasetMeta m;
  m.pde = {PdeKind::ns2d, 0.001, 1.0, 1};
  m.grid = {2, 16};
  m.t_max = 0.1;
  m.save_dt = 0.05;
  m.dt = 1e-2;
  m.n_train = 2;
  m.n_test = 1;
  const Dataset ds = generate_split(m, "train");
  EXPECT_EQ(ds.fields.shape(), (Shape{2, 3, 2, 16, 16}));
}

}  // namespace
}  // namespace opflow
