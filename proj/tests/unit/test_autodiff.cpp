#include <gtest/gtest.h>

#include "opflow/gradcheck.hpp"

namespace opflow {
namespace {

TEST(Autodiff, GradientSuiteWithinTolerance) {
  for (const auto& r : run_gradcheck_suite(1e-5)) {
    EXPECT_TRUE(r.passed) << r.name << " rel.err " << r.error;
  }
}

TEST(Autodiff, SuiteCoversEveryOp) {
  std::vector<std::string> names;
  for (const auto& r : run_gradcheck_suite(1e-5)) names.push_back(r.name);
  for (const char* op : {"add", "sub", "mul", "scale", "sum", "mean", "activation/relu", "activation/gelu",
                         "activation/tanh", "activation/identity", "slice", "reshape", "select", "concat_channels",
                         "linear", "channel_affine", "to_complex", "real_part", "fft_forward/1d", "fft_inverse/1d",
                         "fft_forward/2d", "fft_inverse/2d", "gather_modes", "scatter_modes", "complex_mix",
                         "relative_l2_rows", "relative_l2", "primary_forward", "hyper_forward/time", "propagate",
                         "loss_final", "loss_initial", "loss_inter", "loss_comp", "total_loss"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), op), names.end()) << op;
  }
}

TEST(Autodiff, HandDerivedGradient) {
  // d/dx sum(x * x + 3 x) = 2 x + 3
  Tape tape;
  const Var x = tape.leaf(Array({3}, std::vector<double>{1.0, -2.0, 0.5}));
  const Var y = sum(add(mul(x, x), scale(x, 3.0)));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(y.value()[0], 1.0 + 4.0 + 0.25 + 3.0 * (1.0 - 2.0 + 0.5));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 5.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[1], -1.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[2], 4.0);
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
  Tape tape;
  const Var x = tape.leaf(Array::scalar(2.0));
  const Var y = add(x, add(x, x));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 3.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape tape;
  const Var c = tape.constant(Array::scalar(4.0));
  const Var x = tape.leaf(Array::scalar(2.0));
  tape.backward(mul(c, x));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 4.0);
  EXPECT_DOUBLE_EQ(tape.grad(c)[0], 0.0);
}

TEST(Autodiff, BackwardRequiresScalar) {
  Tape tape;
  const Var x = tape.leaf(Array({2}, 1.0));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Autodiff, NonFiniteResultRaises) {
  Tape tape;
  const Var x = tape.leaf(Array({2}, std::vector<double>{1.0, 1e300}));
  EXPECT_THROW(mul(x, x), NumericalError);
}

TEST(Autodiff, ShapeMismatchRaises) {
  Tape tape;
  const Var a = tape.leaf(Array({2}, 1.0));
  const Var b = tape.leaf(Array({3}, 1.0));
  EXPECT_THROW(add(a, b), DimensionError);
}

TEST(Autodiff, MixingTapesRaises) {
  Tape t1, t2;
  const Var a = t1.leaf(Array({2}, 1.0));
  const Var b = t2.leaf(Array({2}, 1.0));
  EXPECT_THROW(add(a, b), ContractError);
}

TEST(Autodiff, FftOpsRoundTrip) {
  Tape tape;
  const Array x = detail::random_array({2, 3, 16}, 5);
  const Var back = real_part(fft_inverse(fft_forward(to_complex(tape.constant(x)), {2}), {2}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back.value()[i], x[i], 1e-13);
}

TEST(Autodiff, RelativeL2Examples) {
  Tape tape;
  const Var a = tape.constant(Array({2}, std::vector<double>{3.0, 4.0}));
  const Var b = tape.constant(Array({2}, std::vector<double>{0.0, 4.0}));
  EXPECT_NEAR(relative_l2(a, b).value()[0], 0.75, 1e-12);
  EXPECT_EQ(relative_l2(b, b).value()[0], 0.0);
}

TEST(Autodiff, LinearExamples) {
  Tape tape;
  const Var id = linear(tape.constant(Array({1, 2}, std::vector<double>{1.0, 2.0})),
                        tape.constant(Array({2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0})), tape.constant(Array({2})));
  EXPECT_EQ(id.value(), Array({1, 2}, std::vector<double>{1.0, 2.0}));
  const Var y = linear(tape.constant(Array({1, 2}, std::vector<double>{1.0, 1.0})),
                       tape.constant(Array({1, 2}, std::vector<double>{2.0, 3.0})), tape.constant(Array::scalar(1.0)));
  EXPECT_DOUBLE_EQ(y.value()[0], 6.0);

  const Var w = tape.leaf(Array({2, 2}, std::vector<double>{0.5, -1.0, 2.0, 0.25}));
  const Var out = linear(tape.constant(Array({1, 2}, std::vector<double>{1.0, 2.0})), w, tape.constant(Array({2})));
  tape.backward(sum(out));
  EXPECT_EQ(tape.grad(w), Array({2, 2}, std::vector<double>{1.0, 2.0, 1.0, 2.0}));
}

TEST(Autodiff, ActivationValues) {
  Tape tape;
  const Var x = tape.constant(Array({3}, std::vector<double>{-1.0, 2.0, 0.0}));
  const Array r = activation(x, Activation::relu).value();
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  EXPECT_EQ(activation(x, Activation::tanh).value()[2], 0.0);
  const Var one = tape.constant(Array::scalar(1.0));
  EXPECT_NEAR(activation(one, Activation::gelu).value()[0], 0.8413447460685429, 1e-12);
  EXPECT_THROW(activation_from_string("swish"), ConfigError);
}

TEST(Autodiff, SumOfSquaresGradient) {
  Tape tape;
  const Var x = tape.leaf(Array({2}, std::vector<double>{1.0, 2.0}));
  const Var unused = tape.leaf(Array({2}, std::vector<double>{5.0, 6.0}));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(tape.grad(x), Array({2}, std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(tape.grad(unused), Array({2}));
}

}  // namespace
}  // namespace opflow
