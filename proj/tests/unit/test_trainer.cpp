#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "opflow/trainer.hpp"
#include "support/tiny_data.hpp"

namespace opflow {
namespace {

namespace fs = std::filesystem;

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 5;
  c.eval_every = 2;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("opflow-trainer-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias correction makes the first step lr * g / |g|.
  std::vector<Array> theta{Array::scalar(1.0)};
  AdamState s = AdamState::for_params(theta);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  adam_step(theta, {Array::scalar(1.0)}, s, cfg);
  EXPECT_NEAR(theta[0][0], 0.9, 1e-9);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, SecondStepByHand) {
  std::vector<Array> theta{Array::scalar(1.0)};
  AdamState s = AdamState::for_params(theta);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  adam_step(theta, {Array::scalar(1.0)}, s, cfg);
  adam_step(theta, {Array::scalar(-2.0)}, s, cfg);
  const double m = 0.9 * 0.1 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 + 0.001 * 4.0;
  const double mhat = m / (1.0 - 0.81);
  const double vhat = v / (1.0 - 0.999 * 0.999);
  const double first = 1.0 - 0.1 / (1.0 + 1e-8);
  EXPECT_NEAR(theta[0][0], first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
}

TEST(Adam, DecoupledAndCoupledWeightDecay) {
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  std::vector<Array> a{Array::scalar(1.0)};
  AdamState sa = AdamState::for_params(a);
  adam_step(a, {Array::scalar(1.0)}, sa, cfg);
  EXPECT_NEAR(a[0][0], 1.0 - 0.05 - 0.1, 1e-9);

  cfg.decoupled = false;
  std::vector<Array> b{Array::scalar(1.0)};
  AdamState sb = AdamState::for_params(b);
  adam_step(b, {Array::scalar(1.0)}, sb, cfg);
  EXPECT_NEAR(b[0][0], 0.9, 1e-9);
}

TEST(Adam, RejectsMismatchedState) {
  std::vector<Array> theta{Array::scalar(1.0), Array::scalar(2.0)};
  AdamState s = AdamState::for_params({Array::scalar(1.0)});
  EXPECT_THROW(adam_step(theta, {Array::scalar(1.0), Array::scalar(1.0)}, s, {}), DimensionError);
}

TEST(Augment, SameShiftForInputAndTarget) {
  const Dataset& ds = testing::tiny_train();
  const Field v0 = ds.at(0, 0), vT = ds.at(0, 4);
  const auto [a0, aT] = circular_shift_augment(v0, vT, 17);
  std::size_t shift = 0;
  while (shift < 32 && roll(v0, shift).values != a0.values) ++shift;
  ASSERT_LT(shift, 32u);
  EXPECT_EQ(roll(vT, shift).values, aT.values);
  EXPECT_EQ(circular_shift_augment(v0, vT, 17).first.values, a0.values);
  EXPECT_THROW(circular_shift_augment(Field({2, 8}, 2), Field({2, 8}, 2), 1), ConfigError);
}

TEST(Augment, ShiftCommutesWithSolver) {
  // The PDE is translation invariant, so shifted pairs are valid data.
  const Dataset& ds = testing::tiny_train();
  const DatasetMeta& m = ds.meta;
  const Field shifted = roll(ds.at(1, 0), 5);
  const Field evolved = solve(m.pde, shifted, SolveConfig{m.dt, {1.0}}).back().field;
  EXPECT_LT(err(evolved, roll(ds.at(1, 4), 5)), 1e-10);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.P = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.P = 2;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c = quick_config(7);
  c.weights = LossWeights::three_d();
  c.reduction = Reduction::sum;
  c.adam.decoupled = false;
  const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  const FnoConfig f{2, 8, 3, 2, Activation::gelu, false};
  EXPECT_EQ(nlohmann::json(f).get<FnoConfig>(), f);
  HyperConfig h;
  h.identity_noise = 0.5;
  EXPECT_EQ(nlohmann::json(h).get<HyperConfig>(), h);
}

TEST(Trainer, OverfitsTwoSamples) {
  const Dataset& ds = testing::tiny_train();
  Dataset two = ds;
  two.fields = Array({2, ds.snapshots(), 1, 32},
                     std::vector<double>(ds.fields.storage().begin(), ds.fields.storage().begin() + 2 * 5 * 32));
  TrainConfig cfg = quick_config(150);
  cfg.batch_size = 2;
  cfg.adam.lr = 3e-3;
  cfg.weights = LossWeights::baseline();
  cfg.augment_shift = false;
  const TrainState s = train(testing::tiny_model(), {}, two, nullptr, cfg);
  const auto& h = s.history.epochs;
  EXPECT_LT(h.back().final, 0.3 * h.front().final);
}

TEST(Trainer, HistoryAndEvalCadence) {
  const TrainState s = train(testing::tiny_model(), {}, testing::tiny_train(), &testing::tiny_test(), quick_config(5));
  ASSERT_EQ(s.history.epochs.size(), 5u);
  EXPECT_TRUE(std::isnan(s.history.epochs[0].test_err));
  EXPECT_FALSE(std::isnan(s.history.epochs[1].test_err));
  EXPECT_TRUE(std::isnan(s.history.epochs[2].test_err));
  EXPECT_FALSE(std::isnan(s.history.epochs[4].test_err));
  for (const auto& e : s.history.epochs) {
    EXPECT_GT(e.inter, 0.0);
    EXPECT_GT(e.comp, 0.0);
  }

  const fs::path dir = temp_dir("history");
  s.history.write_csv(dir / "history.csv");
  std::ifstream in(dir / "history.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,loss_final,loss_initial,loss_inter,loss_comp,loss_total,test_err_T");
}

TEST(Trainer, BaselineSkipsSemigroupTerms) {
  TrainConfig cfg = quick_config(1);
  cfg.weights = LossWeights::baseline();
  const TrainState s = train(testing::tiny_model(), {}, testing::tiny_train(), nullptr, cfg);
  EXPECT_EQ(s.history.epochs[0].initial, 0.0);
  EXPECT_EQ(s.history.epochs[0].inter, 0.0);
  EXPECT_EQ(s.history.epochs[0].comp, 0.0);
}

TEST(Trainer, DeterministicForSeed) {
  const TrainState a = train(testing::tiny_model(), {}, testing::tiny_train(), nullptr, quick_config(2));
  const TrainState b = train(testing::tiny_model(), {}, testing::tiny_train(), nullptr, quick_config(2));
  EXPECT_EQ(a.model.theta, b.model.theta);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const TrainConfig cfg = quick_config(4);
  const TrainState full = train(testing::tiny_model(), {}, testing::tiny_train(), &testing::tiny_test(), cfg);

  TrainConfig half = cfg;
  half.epochs = 2;
  const TrainState first = train(testing::tiny_model(), {}, testing::tiny_train(), &testing::tiny_test(), half);
  const fs::path ckpt = temp_dir("resume") / "checkpoint.opfl";
  write_checkpoint(ckpt, first, half);
  Checkpoint ck = read_checkpoint(ckpt);
  EXPECT_EQ(ck.state.epochs_done, 2u);
  train(ck.state, testing::tiny_train(), &testing::tiny_test(), cfg);

  EXPECT_EQ(ck.state.model.theta, full.model.theta);
  EXPECT_EQ(ck.state.adam.m, full.adam.m);
  ASSERT_EQ(ck.state.history.epochs.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(ck.state.history.epochs[e].total, full.history.epochs[e].total);
}

TEST(Checkpoint, RoundTrip) {
  const TrainConfig cfg = quick_config(1);
  const TrainState s = train(testing::tiny_model(), {}, testing::tiny_train(), nullptr, cfg);
  const Checkpoint ck = checkpoint_from_container(decode(encode(to_container(s, cfg))));
  EXPECT_EQ(ck.state.model.theta, s.model.theta);
  EXPECT_EQ(ck.state.model.fno, s.model.fno);
  EXPECT_EQ(ck.state.adam.v, s.adam.v);
  EXPECT_EQ(ck.state.adam.step, s.adam.step);
  EXPECT_EQ(nlohmann::json(ck.config), nlohmann::json(cfg));
}

TEST(Checkpoint, RejectsDataset) {
  EXPECT_THROW(checkpoint_from_container(to_container(testing::tiny_test())), FormatError);
}

TEST(Presets, DeskAndPaper) {
  const Preset desk = preset_from_name("desk");
  EXPECT_EQ(desk.fno.width, 16);
  EXPECT_EQ(desk.fno.modes, 12);
  EXPECT_EQ(desk.train.epochs, 50u);
  EXPECT_EQ(desk.data.grid.n, 128u);
  const Preset paper = preset_from_name("paper");
  EXPECT_EQ(paper.fno.width, 64);
  EXPECT_EQ(paper.train.batch_size, 20u);
  EXPECT_DOUBLE_EQ(paper.train.adam.lr, 1e-3);
  EXPECT_DOUBLE_EQ(paper.train.adam.weight_decay, 1e-4);
  EXPECT_THROW(preset_from_name("huge"), ConfigError);
}

TEST(Adam, ZeroGradientWithoutDecayIsNoop) {
  std::vector<Array> theta{Array({3}, std::vector<double>{1.0, -2.0, 3.0})};
  const std::vector<Array> before = theta;
  AdamState s = AdamState::for_params(theta);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  adam_step(theta, {Array({3})}, s, cfg);
  EXPECT_EQ(theta, before);
}

TEST(Trainer, OverfitMicroRun) {
  // N = 4 samples, tiny model, 200 epochs: loss_final <= 0.02.
  const Dataset& ds = testing::tiny_train();
  Dataset four = ds;
  four.fields = Array({4, ds.snapshots(), 1, 32},
                      std::vector<double>(ds.fields.storage().begin(), ds.fields.storage().begin() + 4 * 5 * 32));
  TrainConfig cfg = quick_config(200);
  cfg.eval_every = 1000;
  cfg.adam.lr = 1e-3;
  cfg.adam.weight_decay = 0.0;
  cfg.weights = LossWeights::baseline();
  cfg.augment_shift = false;
  FnoConfig tiny = testing::tiny_model();
  tiny.width = 16;
  tiny.modes = 8;
  const TrainState s = train(tiny, {}, four, nullptr, cfg);
  EXPECT_LE(s.history.epochs.back().final, 0.02);
}

}  // namespace
}  // namespace opflow
