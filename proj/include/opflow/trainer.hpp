#pragma once

// Adam training of the hypernetwork with per-iteration time resampling and
// circular-shift augmentation, plus checkpoints (kind "checkpoint").
//
// Random streams, each re-derived per epoch from the root seed so a resumed
// run replays exactly: "init", "shuffle", "augmentation", "time-plans".

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opflow/container.hpp"
#include "opflow/dataset.hpp"
#include "opflow/eval.hpp"
#include "opflow/hypernet.hpp"
#include "opflow/losses.hpp"

namespace opflow {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool decoupled = true;
};

struct AdamState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::uint64_t step = 0;

  static AdamState for_params(const std::vector<Array>& theta) {
    AdamState s;
    for (const auto& a : theta) {
      s.m.push_back(Array::zeros_like(a));
      s.v.push_back(Array::zeros_like(a));
    }
    return s;
  }
};

/// One Adam update in place. Decoupled weight decay shrinks theta by
/// lr * wd before the moment step; coupled adds wd * theta to the gradient.
inline void adam_step(std::vector<Array>& theta, const std::vector<Array>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (grads.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Array& p = theta[k];
    const Array& g = grads[k];
    p.require_same_shape(g, "adam_step");
    p.require_same_shape(state.m[k], "adam_step");
    Array& m = state.m[k];
    Array& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (!cfg.decoupled) gi += cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      if (cfg.decoupled) p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

/// Same random cyclic shift for input and target. Only defined in 1-D.
inline std::pair<Field, Field> circular_shift_augment(const Field& v0, const Field& vT, std::uint64_t seed) {
  if (v0.grid.d != 1 || vT.grid.d != 1) throw ConfigError("circular-shift augmentation is 1-D only");
  if (!(v0.grid == vT.grid)) throw DimensionError("augmentation: fields live on different grids");
  Rng rng(seed);
  const std::size_t shift = rng.below(v0.grid.n);
  return {roll(v0, shift), roll(vT, shift)};
}

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 20;
  AdamConfig adam;
  int P = 2;
  LossWeights weights;
  Reduction reduction = Reduction::mean;
  std::uint64_t seed = 0;
  bool augment_shift = true;
  std::size_t eval_every = 10;
  double horizon = 1.0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (P < 1 || P > 4) throw ConfigError("P must be in 1..4 (memory grows with P chained graphs)");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    weights.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double final = 0.0;
  double initial = 0.0;
  double inter = 0.0;
  double comp = 0.0;
  double total = 0.0;
  double test_err = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Per-epoch CSV. Wall time is left out so that reruns are byte-identical.
  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,loss_final,loss_initial,loss_inter,loss_comp,loss_total,test_err_T\n";
    for (const auto& e : epochs) {
      out << e.epoch << ',' << detail::fmt(e.final) << ',' << detail::fmt(e.initial) << ',' << detail::fmt(e.inter)
          << ',' << detail::fmt(e.comp) << ',' << detail::fmt(e.total) << ',' << detail::fmt(e.test_err) << '\n';
    }
  }
};

/// Everything needed to continue a run.
struct TrainState {
  HyperModel model;
  AdamState adam;
  TrainHistory history;
  std::size_t epochs_done = 0;
};

inline TrainState init_train_state(const FnoConfig& fno, const HyperConfig& hyper, const TrainConfig& cfg) {
  TrainState s;
  s.model = init_hyper_model(fno, hyper, derive_seed(cfg.seed, "init"));
  s.adam = AdamState::for_params(s.model.theta);
  return s;
}

/// One optimizer step on a batch; returns the per-term loss values.
inline EpochRecord train_step(TrainState& state, const Batch& batch, const TimeSamplePlan& plan,
                              const TrainConfig& cfg) {
  Tape tape;
  HyperPropagator prop(tape, state.model);
  const LossTerms terms = total_loss(prop, tape, batch, cfg.weights, plan, cfg.reduction);
  const double total = terms.total.value()[0];
  if (!std::isfinite(total)) throw NumericalError("total loss is not finite");
  tape.backward(terms.total);
  std::vector<Array> grads;
  for (std::size_t k = 0; k < prop.parameters().size(); ++k) {
    grads.push_back(tape.grad(prop.parameters()[k]));
    if (!grads.back().all_finite()) throw NumericalError("gradient of hypernetwork tensor " + std::to_string(k) + " is not finite");
  }
  adam_step(state.model.theta, grads, state.adam, cfg.adam);
  EpochRecord r;
  r.final = terms.final;
  r.initial = terms.initial;
  r.inter = terms.inter;
  r.comp = terms.comp;
  r.total = total;
  return r;
}

using EpochCallback = std::function<void(const TrainState&)>;

/// Runs epochs state.epochs_done + 1 .. cfg.epochs. Test Err at T is measured
/// every cfg.eval_every epochs and after the last one.
inline void train(TrainState& state, const Dataset& train_set, const Dataset* test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  const std::size_t t_index = train_set.time_index(cfg.horizon);
  const std::size_t n = train_set.size();
  const bool augment = cfg.augment_shift && train_set.meta.grid.d == 1;
  const Grid grid = train_set.meta.grid;

  while (state.epochs_done < cfg.epochs) {
    const std::size_t epoch = state.epochs_done + 1;
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(cfg.seed, "shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng plans(derive_seed(cfg.seed, "time-plans", epoch));
    const std::uint64_t aug_root = derive_seed(cfg.seed, "augmentation", epoch);

    EpochRecord sum;
    std::size_t iterations = 0;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(lo),
                                         order.begin() + static_cast<long>(std::min(n, lo + cfg.batch_size)));
      Batch batch{train_set.batch(0, idx), train_set.batch(t_index, idx)};
      if (augment) {
        const std::size_t block = batch.v0.size() / idx.size();
        for (std::size_t b = 0; b < idx.size(); ++b) {
          const auto [a0, aT] = circular_shift_augment(unstack(batch.v0, b, grid), unstack(batch.vT, b, grid),
                                                       derive_seed(aug_root, "sample", lo + b));
          std::copy_n(a0.values.raw(), block, batch.v0.raw() + b * block);
          std::copy_n(aT.values.raw(), block, batch.vT.raw() + b * block);
        }
      }
      const TimeSamplePlan plan = sample_plan(plans, idx.size(), cfg.P, cfg.horizon);
      const EpochRecord r = train_step(state, batch, plan, cfg);
      sum.final += r.final;
      sum.initial += r.initial;
      sum.inter += r.inter;
      sum.comp += r.comp;
      sum.total += r.total;
      ++iterations;
    }
    const double k = static_cast<double>(iterations);
    EpochRecord rec{epoch, sum.final / k, sum.initial / k, sum.inter / k, sum.comp / k, sum.total / k};
    if (test_set && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      rec.test_err = eval_at_T(state.model, *test_set, cfg.horizon).mean;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.history.epochs.push_back(rec);
    state.epochs_done = epoch;
    if (on_epoch) on_epoch(state);
  }
}

inline TrainState train(const FnoConfig& fno, const HyperConfig& hyper, const Dataset& train_set,
                        const Dataset* test_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  TrainState state = init_train_state(fno, hyper, cfg);
  train(state, train_set, test_set, cfg, on_epoch);
  return state;
}

// ---------------------------------------------------------------- checkpoints

inline void to_json(nlohmann::json& j, const FnoConfig& c) {
  j = {{"d", c.d},
       {"width", c.width},
       {"modes", c.modes},
       {"layers", c.layers},
       {"activation", to_string(c.activation)},
       {"coord_channels", c.coord_channels}};
}
inline void from_json(const nlohmann::json& j, FnoConfig& c) {
  c.d = j.at("d").get<int>();
  c.width = j.at("width").get<int>();
  c.modes = j.at("modes").get<int>();
  c.layers = j.at("layers").get<int>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.coord_channels = j.at("coord_channels").get<bool>();
}
inline void to_json(nlohmann::json& j, const HyperConfig& c) {
  j = {{"hidden_layers", c.hidden_layers},
       {"hidden_width", c.hidden_width},
       {"activation", to_string(c.activation)},
       {"output_init_scale", c.output_init_scale},
       {"identity_init", c.identity_init},
       {"identity_noise", c.identity_noise}};
}
inline void from_json(const nlohmann::json& j, HyperConfig& c) {
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.output_init_scale = j.at("output_init_scale").get<double>();
  c.identity_init = j.at("identity_init").get<bool>();
  c.identity_noise = j.at("identity_noise").get<double>();
}
inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"final", w.final}, {"initial", w.initial}, {"inter", w.inter}, {"comp", w.comp}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w = {j.at("final").get<double>(), j.at("initial").get<double>(), j.at("inter").get<double>(),
       j.at("comp").get<double>()};
}
inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.adam.lr},
       {"weight_decay", c.adam.weight_decay},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"eps", c.adam.eps},
       {"decoupled_weight_decay", c.adam.decoupled},
       {"P", c.P},
       {"weights", c.weights},
       {"reduction", c.reduction == Reduction::mean ? "mean" : "sum"},
       {"seed", c.seed},
       {"augment_shift", c.augment_shift},
       {"eval_every", c.eval_every},
       {"horizon", c.horizon}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.adam.lr = j.at("lr").get<double>();
  c.adam.weight_decay = j.at("weight_decay").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.adam.decoupled = j.at("decoupled_weight_decay").get<bool>();
  c.P = j.at("P").get<int>();
  c.weights = j.at("weights").get<LossWeights>();
  const std::string red = j.at("reduction").get<std::string>();
  if (red != "mean" && red != "sum") throw ConfigError("reduction must be 'mean' or 'sum'");
  c.reduction = red == "mean" ? Reduction::mean : Reduction::sum;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.augment_shift = j.at("augment_shift").get<bool>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.horizon = j.at("horizon").get<double>();
}

inline Container to_container(const TrainState& s, const TrainConfig& cfg) {
  Container c;
  c.kind = "checkpoint";
  c.meta = {{"fno", s.model.fno},
            {"hyper", s.model.hyper},
            {"train", cfg},
            {"epochs_done", s.epochs_done},
            {"adam_step", s.adam.step},
            {"tensors", s.model.theta.size()}};
  for (std::size_t k = 0; k < s.model.theta.size(); ++k) c.put("theta." + std::to_string(k), s.model.theta[k]);
  for (std::size_t k = 0; k < s.adam.m.size(); ++k) c.put("adam.m." + std::to_string(k), s.adam.m[k]);
  for (std::size_t k = 0; k < s.adam.v.size(); ++k) c.put("adam.v." + std::to_string(k), s.adam.v[k]);
  Array hist({s.history.epochs.size(), 8});
  for (std::size_t i = 0; i < s.history.epochs.size(); ++i) {
    const auto& e = s.history.epochs[i];
    const double row[8] = {static_cast<double>(e.epoch), e.final, e.initial, e.inter, e.comp, e.total, e.test_err,
                           e.wall_seconds};
    std::copy_n(row, 8, hist.raw() + i * 8);
  }
  c.put("history", hist);
  return c;
}

struct Checkpoint {
  TrainState state;
  TrainConfig config;
};

inline Checkpoint checkpoint_from_container(const Container& c) {
  if (c.kind != "checkpoint") throw FormatError("expected a checkpoint container, found kind '" + c.kind + "'");
  Checkpoint ck;
  std::size_t tensors = 0;
  try {
    ck.state.model.fno = c.meta.at("fno").get<FnoConfig>();
    ck.state.model.hyper = c.meta.at("hyper").get<HyperConfig>();
    ck.config = c.meta.at("train").get<TrainConfig>();
    ck.state.epochs_done = c.meta.at("epochs_done").get<std::size_t>();
    ck.state.adam.step = c.meta.at("adam_step").get<std::uint64_t>();
    tensors = c.meta.at("tensors").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (std::size_t k = 0; k < tensors; ++k) {
    ck.state.model.theta.push_back(c.get("theta." + std::to_string(k)));
    ck.state.adam.m.push_back(c.get("adam.m." + std::to_string(k)));
    ck.state.adam.v.push_back(c.get("adam.v." + std::to_string(k)));
  }
  const Array& hist = c.get("history");
  for (std::size_t i = 0; hist.rank() == 2 && i < hist.extent(0); ++i) {
    const double* r = hist.raw() + i * 8;
    ck.state.history.epochs.push_back(
        {static_cast<std::size_t>(r[0]), r[1], r[2], r[3], r[4], r[5], r[6], r[7]});
  }
  const std::size_t out = ck.state.model.theta.empty() ? 0 : ck.state.model.theta.back().size();
  if (out != param_count(ck.state.model.fno)) throw FormatError("checkpoint output layer does not match its FNO config");
  return ck;
}

inline void write_checkpoint(const std::filesystem::path& path, const TrainState& s, const TrainConfig& cfg) {
  write_container(path, to_container(s, cfg));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_container(read_container(path));
}

// ---------------------------------------------------------------- presets

struct Preset {
  std::string name;
  FnoConfig fno;
  HyperConfig hyper;
  TrainConfig train;
  DatasetMeta data;
};

/// Single-core scale: 1-D, width 16, 12 modes, n = 128, 100/20 samples, 50
/// epochs. Batch 5 and output_init_scale 1e-2 give the 250-step budget of 50
/// epochs enough updates to fit both T and the semigroup terms.
inline Preset desk_preset() {
  Preset p;
  p.name = "desk";
  p.fno = FnoConfig{1, 16, 12, 4, Activation::relu, true};
  p.hyper.output_init_scale = 1e-2;
  p.train.epochs = 50;
  p.train.batch_size = 5;
  p.data.grid = {1, 128};
  p.data.n_train = 100;
  p.data.n_test = 20;
  return p;
}

/// Full scale: width 64, 16 modes, n = 1024, 1000/100 samples, 500 epochs, batch 20.
inline Preset paper_preset() {
  Preset p;
  p.name = "paper";
  p.fno = FnoConfig{1, 64, 16, 4, Activation::relu, true};
  p.train.epochs = 500;
  p.train.batch_size = 20;
  p.data.grid = {1, 1024};
  p.data.n_train = 1000;
  p.data.n_test = 100;
  return p;
}

inline Preset preset_from_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

}  // namespace opflow
