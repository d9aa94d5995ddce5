#pragma once

// Central-difference gradient checks for every tape op and for the full
// hypernetwork + FNO pipeline on a tiny configuration.
//
// Error of one check: max_i |analytic_i - numeric_i| / max_i |numeric_i|,
// taken over every entry of every input.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "opflow/autodiff.hpp"
#include "opflow/fno.hpp"
#include "opflow/hypernet.hpp"
#include "opflow/losses.hpp"
#include "opflow/random.hpp"

namespace opflow {

struct GradCheckResult {
  std::string name;
  double error = 0.0;
  bool passed = false;
};

/// Builds a graph from leaf inputs and returns its output (any shape).
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Reduces the output to a scalar with fixed random weights, differentiates by
/// the tape and by central differences with step h, and compares.
inline GradCheckResult check_gradient(const std::string& name, const std::vector<Array>& inputs,
                                      const GraphBuilder& build, double tol = 1e-5, double h = 1e-5) {
  Array probe;
  auto evaluate = [&](const std::vector<Array>& xs, bool with_grad, std::vector<Array>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, with_grad));
    const Var out = build(tape, leaves);
    if (probe.size() != out.value().size()) {
      Rng rng(derive_seed(0x9c0de, name));
      probe = Array(out.shape());
      for (auto& p : probe.storage()) p = rng.uniform(-1.0, 1.0);
    }
    const Var loss = sum(mul(out, tape.constant(probe)));
    if (with_grad) {
      tape.backward(loss);
      for (const auto& l : leaves) grads->push_back(tape.grad(l));
    }
    return loss.value()[0];
  };

  std::vector<Array> analytic;
  evaluate(inputs, true, &analytic);
  double max_diff = 0.0;
  double max_ref = 0.0;
  std::vector<Array> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + h;
      const double up = evaluate(xs, false, nullptr);
      xs[k][i] = orig - h;
      const double down = evaluate(xs, false, nullptr);
      xs[k][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[k][i]));
      max_ref = std::max(max_ref, std::abs(numeric));
    }
  }
  GradCheckResult r{name, max_ref > 0.0 ? max_diff / max_ref : max_diff, false};
  r.passed = r.error <= tol;
  return r;
}

namespace detail {

inline Array random_array(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Array a(std::move(s));
  for (auto& x : a.storage()) x = rng.uniform(lo, hi);
  return a;
}

/// Values bounded away from 0 so relu stays differentiable under the FD step.
inline Array away_from_zero(Shape s, std::uint64_t seed) {
  Array a = random_array(std::move(s), seed);
  for (auto& x : a.storage()) x = (x < 0 ? -0.1 : 0.1) + 0.9 * x;
  return a;
}

}  // namespace detail

/// The tiny end-to-end configuration: width 2, modes 2, one layer, n = 32.
inline FnoConfig tiny_fno_config(Activation act = Activation::gelu) { return FnoConfig{1, 2, 2, 1, act, true}; }

/// Every op plus primary_forward, hyper_forward and the four loss terms
/// through the full hypernetwork on the tiny configuration.
inline std::vector<GradCheckResult> run_gradcheck_suite(double tol = 1e-5) {
  using detail::away_from_zero;
  using detail::random_array;
  std::vector<GradCheckResult> out;
  auto add_check = [&](const std::string& name, std::vector<Array> inputs, GraphBuilder b) {
    out.push_back(check_gradient(name, inputs, b, tol));
  };
  const Shape m{3, 4};
  add_check("add", {random_array(m, 1), random_array(m, 2)}, [](Tape&, const auto& x) { return add(x[0], x[1]); });
  add_check("sub", {random_array(m, 3), random_array(m, 4)}, [](Tape&, const auto& x) { return sub(x[0], x[1]); });
  add_check("mul", {random_array(m, 5), random_array(m, 6)}, [](Tape&, const auto& x) { return mul(x[0], x[1]); });
  add_check("scale", {random_array(m, 7)}, [](Tape&, const auto& x) { return scale(x[0], -1.7); });
  add_check("sum", {random_array(m, 8)}, [](Tape&, const auto& x) { return sum(x[0]); });
  add_check("mean", {random_array(m, 9)}, [](Tape&, const auto& x) { return mean(x[0]); });
  for (Activation a : {Activation::relu, Activation::gelu, Activation::tanh, Activation::identity}) {
    add_check(std::string("activation/") + to_string(a), {away_from_zero(m, 10)},
              [a](Tape&, const auto& x) { return activation(x[0], a); });
  }
  add_check("slice", {random_array({12}, 11)}, [](Tape&, const auto& x) { return slice(x[0], 3, {2, 3}); });
  add_check("reshape", {random_array(m, 12)}, [](Tape&, const auto& x) { return reshape(x[0], {4, 3}); });
  add_check("select", {random_array({3, 2, 4}, 13)}, [](Tape&, const auto& x) { return select(x[0], 1); });
  add_check("concat_channels", {random_array({2, 1, 8}, 14), random_array({2, 2, 8}, 15)},
            [](Tape&, const auto& x) { return concat_channels(x[0], x[1]); });
  add_check("linear", {random_array({5, 3}, 16), random_array({4, 3}, 17), random_array({4}, 18)},
            [](Tape&, const auto& x) { return linear(x[0], x[1], x[2]); });
  add_check("channel_affine", {random_array({2, 3, 8}, 19), random_array({4, 3}, 20), random_array({4}, 21)},
            [](Tape&, const auto& x) { return channel_affine(x[0], x[1], x[2]); });
  add_check("to_complex", {random_array({2, 8}, 22)}, [](Tape&, const auto& x) { return to_complex(x[0]); });
  add_check("real_part", {random_array({2, 8, 2}, 23)}, [](Tape&, const auto& x) { return real_part(x[0]); });
  add_check("fft_forward/1d", {random_array({2, 1, 16, 2}, 24)},
            [](Tape&, const auto& x) { return fft_forward(x[0], {2}); });
  add_check("fft_inverse/1d", {random_array({2, 1, 16, 2}, 25)},
            [](Tape&, const auto& x) { return fft_inverse(x[0], {2}); });
  add_check("fft_forward/2d", {random_array({1, 2, 8, 8, 2}, 26)},
            [](Tape&, const auto& x) { return fft_forward(x[0], {2, 3}); });
  add_check("fft_inverse/2d", {random_array({1, 2, 8, 8, 2}, 27)},
            [](Tape&, const auto& x) { return fft_inverse(x[0], {2, 3}); });
  add_check("gather_modes", {random_array({2, 3, 16, 2}, 28)},
            [](Tape&, const auto& x) { return gather_modes(x[0], {0, 1, 5, 15}); });
  add_check("scatter_modes", {random_array({2, 3, 4, 2}, 29)},
            [](Tape&, const auto& x) { return scatter_modes(x[0], {16}, {0, 1, 5, 15}, {1.0, 2.0, 2.0, 0.5}); });
  add_check("complex_mix", {random_array({2, 3, 4, 2}, 30), random_array({4, 3, 5, 2}, 31)},
            [](Tape&, const auto& x) { return complex_mix(x[0], x[1]); });
  add_check("relative_l2_rows", {random_array({3, 2, 8}, 32), random_array({3, 2, 8}, 33)},
            [](Tape&, const auto& x) { return relative_l2_rows(x[0], x[1]); });
  add_check("relative_l2", {random_array({2, 8}, 34), random_array({2, 8}, 35)},
            [](Tape&, const auto& x) { return relative_l2(x[0], x[1]); });

  const FnoConfig tiny = tiny_fno_config();
  const std::size_t n = 32;
  Rng init(36);
  add_check("primary_forward", {init_params(tiny, init), random_array({2, 1, n}, 37)},
            [tiny](Tape& t, const auto& x) { return primary_forward(t, x[0], tiny, x[1]); });

  HyperConfig hyper;
  const HyperModel model = init_hyper_model(tiny, hyper, 38);
  add_check("hyper_forward/time", {Array({3, 1}, std::vector<double>{0.1, 0.45, 0.9})},
            [&model](Tape& t, const auto& x) {
              std::vector<Var> theta;
              for (const auto& a : model.theta) theta.push_back(t.constant(a));
              return hyper_forward(theta, model.hyper, x[0]);
            });

  const Array v0 = random_array({2, 1, n}, 39);
  const Array vT = random_array({2, 1, n}, 40);
  Rng plan_rng(41);
  const TimeSamplePlan plan = sample_plan(plan_rng, 2, 3);
  auto through_model = [&](const std::string& name, std::function<Var(HyperPropagator&, Tape&)> f) {
    add_check(name, model.theta, [&model, f](Tape& t, const std::vector<Var>& theta) {
      HyperModel m{model.fno, model.hyper, {}};
      HyperPropagator prop(t, m, theta);
      return f(prop, t);
    });
  };
  const Batch batch{v0, vT};
  through_model("propagate", [&](HyperPropagator& p, Tape& t) { return p.apply(t.constant(v0), 0.7); });
  through_model("loss_final", [&](HyperPropagator& p, Tape& t) { return loss_final(p, t, batch); });
  through_model("loss_initial", [&](HyperPropagator& p, Tape& t) { return loss_initial(p, t, batch); });
  through_model("loss_inter", [&](HyperPropagator& p, Tape& t) { return loss_inter(p, t, batch, plan); });
  through_model("loss_comp", [&](HyperPropagator& p, Tape& t) { return loss_comp(p, t, batch, plan); });
  through_model("total_loss", [&](HyperPropagator& p, Tape& t) {
    return total_loss(p, t, batch, LossWeights::standard(), plan).total;
  });
  return out;
}

}  // namespace opflow
