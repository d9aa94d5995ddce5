#pragma once

// Hypernetwork g: t -> tanh(t) -> MLP -> FNO parameter vector, and the
// operator Phi_t v = f_{g(t)}(v) built from it.

#include <cmath>
#include <span>
#include <vector>

#include "opflow/autodiff.hpp"
#include "opflow/fno.hpp"
#include "opflow/random.hpp"

namespace opflow {

struct HyperConfig {
  int hidden_layers = 3;
  int hidden_width = 32;
  Activation activation = Activation::relu;
  /// Scale of the output layer's weight matrix at init, so an untrained g is
  /// almost constant in t.
  double output_init_scale = 1e-3;
  /// Output bias starts at an exact identity FNO plus identity_noise times a
  /// regular FNO init. Starting near zero instead lets L_inter pull training
  /// into the input-independent fixed point Phi_t v = const.
  /// Falls back to the regular init when the activation has no exact identity.
  bool identity_init = true;
  double identity_noise = 0.03;

  void validate() const {
    if (hidden_layers < 1 || hidden_width < 1) throw ConfigError("HyperConfig: need at least one hidden layer");
    if (!(output_init_scale >= 0.0) || !(identity_noise >= 0.0)) throw ConfigError("HyperConfig: init scales must be >= 0");
  }

  bool operator==(const HyperConfig&) const = default;
};

/// theta = [W0, b0, W1, b1, ..., W_out, b_out], weights stored [out, in].
struct HyperModel {
  FnoConfig fno;
  HyperConfig hyper;
  std::vector<Array> theta;

  std::size_t output_dim() const { return param_count(fno); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& a : theta) n += a.size();
    return n;
  }
};

inline HyperModel init_hyper_model(const FnoConfig& fno, const HyperConfig& hyper, std::uint64_t seed) {
  fno.validate();
  hyper.validate();
  Rng rng(seed);
  HyperModel m{fno, hyper, {}};
  std::size_t in = 1;
  const auto width = static_cast<std::size_t>(hyper.hidden_width);
  for (int l = 0; l < hyper.hidden_layers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Array w({width, in});
    Array b({width});
    for (auto& x : w.storage()) x = rng.uniform(-bound, bound);
    for (auto& x : b.storage()) x = rng.uniform(-bound, bound);
    m.theta.push_back(std::move(w));
    m.theta.push_back(std::move(b));
    in = width;
  }
  const std::size_t out = param_count(fno);
  const double bound = hyper.output_init_scale / std::sqrt(static_cast<double>(in));
  Array w({out, in});
  for (auto& x : w.storage()) x = rng.uniform(-bound, bound);
  m.theta.push_back(std::move(w));
  if (hyper.identity_init && has_identity_params(fno)) {
    Array b = init_params(fno, rng);
    const Array id = identity_params(fno);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = id[i] + hyper.identity_noise * b[i];
    m.theta.push_back(std::move(b));
  } else {
    m.theta.push_back(init_params(fno, rng));
  }
  return m;
}

/// g(times) for times[K, 1]; output [K, param_count].
inline Var hyper_forward(std::span<const Var> theta, const HyperConfig& cfg, Var times) {
  Var x = activation(times, Activation::tanh);
  const std::size_t layers = theta.size() / 2;
  for (std::size_t l = 0; l + 1 < layers; ++l) x = activation(linear(x, theta[2 * l], theta[2 * l + 1]), cfg.activation);
  return linear(x, theta[2 * (layers - 1)], theta[2 * (layers - 1) + 1]);
}

inline ParamVector hyper_forward(const HyperModel& model, double t) {
  Tape tape;
  std::vector<Var> theta;
  for (const auto& a : model.theta) theta.push_back(tape.constant(a));
  Var out = hyper_forward(theta, model.hyper, tape.constant(Array({1, 1}, std::vector<double>{t})));
  return out.value().reshaped({model.output_dim()});
}

/// Phi_t on one tape. Parameter vectors for a set of times can be computed in
/// one batched pass with prefetch(); apply() falls back to a single-time pass.
class HyperPropagator {
 public:
  HyperPropagator(Tape& tape, const HyperModel& model, bool trainable = true) : tape_(tape), model_(model) {
    for (const auto& a : model.theta) theta_.push_back(tape.leaf(a, trainable));
  }

  /// Uses hypernetwork tensors already on the tape; model supplies the configs.
  HyperPropagator(Tape& tape, const HyperModel& model, std::vector<Var> theta)
      : tape_(tape), model_(model), theta_(std::move(theta)) {}

  void prefetch(std::span<const double> times) {
    if (times.empty()) return;
    Array t({times.size(), 1}, std::vector<double>(times.begin(), times.end()));
    const Var rows = hyper_forward(theta_, model_.hyper, tape_.constant(std::move(t)));
    for (std::size_t i = 0; i < times.size(); ++i) pending_.push_back({times[i], rows, i});
  }

  Var weights(double t) {
    for (const auto& c : cache_)
      if (c.time == t) return c.weights;
    const std::size_t p = model_.output_dim();
    for (const auto& r : pending_) {
      if (r.time == t) {
        Var w = slice(r.rows, r.row * p, {p});
        cache_.push_back({t, w});
        return w;
      }
    }
    const Var rows = hyper_forward(theta_, model_.hyper, tape_.constant(Array({1, 1}, std::vector<double>{t})));
    Var w = reshape(rows, {p});
    cache_.push_back({t, w});
    return w;
  }

  Var apply(Var v, double t) { return primary_forward(tape_, weights(t), model_.fno, v); }

  std::span<const Var> parameters() const { return theta_; }
  Tape& tape() { return tape_; }

 private:
  struct Pending {
    double time;
    Var rows;
    std::size_t row;
  };
  struct Cached {
    double time;
    Var weights;
  };
  Tape& tape_;
  const HyperModel& model_;
  std::vector<Var> theta_;
  std::vector<Pending> pending_;
  std::vector<Cached> cache_;
};

/// Phi_t applied to a batch [B, C, n(, n)] without recording gradients.
inline Array propagate_batch(const HyperModel& model, const Array& batch, double t) {
  Tape tape;
  HyperPropagator prop(tape, model, false);
  return prop.apply(tape.constant(batch), t).value();
}

inline Field propagate(const HyperModel& model, const Field& v0, double t) {
  Shape s{1};
  s.insert(s.end(), v0.values.shape().begin(), v0.values.shape().end());
  return unstack(propagate_batch(model, v0.values.reshaped(s), t), 0, v0.grid);
}

}  // namespace opflow
