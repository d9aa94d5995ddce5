#pragma once

// Relative-L2 error and the four training objectives. Loss functions are
// templates over the propagator so tests can plug in an analytic semigroup.
// A propagator P provides
//
//   void P::prefetch(std::span<const double> times);
//   Var  P::apply(Var batch, double t);

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "opflow/autodiff.hpp"
#include "opflow/fno.hpp"
#include "opflow/random.hpp"

namespace opflow {

/// Err(a, b) = ||a - b|| / ||b|| over all entries.
inline double err(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("Err: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  if (den == 0.0) throw MetricError("Err: reference field is identically zero");
  return std::sqrt(num / den);
}

inline double err(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) throw DimensionError("Err: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return err(a.data(), b.data());
}

inline double err(const Field& a, const Field& b) { return err(a.values, b.values); }

struct LossWeights {
  double final = 1.0;
  double initial = 1.0;
  double inter = 1.0;
  double comp = 1.0;

  static LossWeights standard() { return {}; }
  static LossWeights three_d() { return {1.0, 1.0, 0.1, 1.0}; }
  static LossWeights baseline() { return {1.0, 0.0, 0.0, 0.0}; }

  static LossWeights from_preset(const std::string& name) {
    if (name == "default") return standard();
    if (name == "3d") return three_d();
    if (name == "baseline") return baseline();
    throw ConfigError("unknown loss-weight preset '" + name + "'");
  }

  void validate() const {
    for (double w : {final, initial, inter, comp})
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
    if (final + initial + inter + comp == 0.0) throw ConfigError("all loss weights are zero");
  }

  bool operator==(const LossWeights&) const = default;
};

enum class Reduction { mean, sum };

struct InterTimes {
  double t1 = 0.0;
  double t2 = 0.0;
};

/// Random times for one batch. comp[i][p - 2] holds the p durations of the
/// p-fold composition for sample i, p = 2..P.
struct TimeSamplePlan {
  double horizon = 1.0;
  std::vector<InterTimes> inter;
  std::vector<std::vector<std::vector<double>>> comp;

  /// All distinct times at which Phi is evaluated by the enabled terms.
  std::vector<double> times(const LossWeights& w) const {
    std::vector<double> t;
    if (w.final > 0.0 || w.comp > 0.0) t.push_back(horizon);
    if (w.initial > 0.0) t.push_back(0.0);
    if (w.inter > 0.0)
      for (const auto& it : inter) {
        t.push_back(it.t1 + it.t2);
        t.push_back(it.t1);
        t.push_back(it.t2);
      }
    if (w.comp > 0.0)
      for (const auto& sample : comp)
        for (const auto& parts : sample) t.insert(t.end(), parts.begin(), parts.end());
    std::vector<double> unique;
    for (double x : t)
      if (std::find(unique.begin(), unique.end(), x) == unique.end()) unique.push_back(x);
    return unique;
  }
};

/// T~ ~ U[0, T], t1 ~ U[0, T~], t2 = T~ - t1.
inline InterTimes sample_inter_times(Rng& rng, double horizon) {
  const double total = rng.uniform(0.0, horizon);
  const double t1 = rng.uniform(0.0, total);
  return {t1, total - t1};
}

/// Durations of a p-piece partition of [0, T]. Breakpoints s_j ~ U over the
/// j-th of p equal subintervals; durations are their differences, so they are
/// positive and sum to T. A zero duration (measure-zero draw) is resampled.
inline std::vector<double> sample_partition(Rng& rng, int p, double horizon) {
  if (p < 1) throw ConfigError("partition needs p >= 1");
  const double width = horizon / p;
  for (;;) {
    std::vector<double> d;
    double prev = 0.0;
    for (int j = 1; j < p; ++j) {
      const double s = rng.uniform((j - 1) * width, j * width);
      d.push_back(s - prev);
      prev = s;
    }
    d.push_back(horizon - prev);
    if (std::all_of(d.begin(), d.end(), [](double x) { return x > 0.0; })) return d;
  }
}

inline TimeSamplePlan sample_plan(Rng& rng, std::size_t batch, int max_pieces, double horizon = 1.0) {
  if (max_pieces < 1) throw ConfigError("P must be >= 1");
  TimeSamplePlan plan;
  plan.horizon = horizon;
  for (std::size_t i = 0; i < batch; ++i) plan.inter.push_back(sample_inter_times(rng, horizon));
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<std::vector<double>> parts;
    for (int p = 2; p <= max_pieces; ++p) parts.push_back(sample_partition(rng, p, horizon));
    plan.comp.push_back(std::move(parts));
  }
  return plan;
}

/// Training pairs: rows of v0 and of the truth at the horizon, [B, C, n(, n)].
struct Batch {
  Array v0;
  Array vT;

  std::size_t size() const { return v0.extent(0); }
};

namespace detail {

inline Var reduce(Tape& tape, const std::vector<Var>& terms, Reduction r) {
  if (terms.empty()) return tape.constant(Array::scalar(0.0));
  Var s = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) s = add(s, terms[i]);
  return r == Reduction::mean ? scale(s, 1.0 / static_cast<double>(terms.size())) : s;
}

inline Var reduce_rows(Var rows, Reduction r) { return r == Reduction::mean ? mean(rows) : sum(rows); }

}  // namespace detail

/// Err(Phi_T v0, v_T) over the batch.
template <class Prop>
Var loss_final(Prop& prop, Tape& tape, const Batch& batch, double horizon = 1.0, Reduction r = Reduction::mean) {
  const Var pred = prop.apply(tape.constant(batch.v0), horizon);
  return detail::reduce_rows(relative_l2_rows(pred, tape.constant(batch.vT)), r);
}

/// Err(Phi_0 v0, v0) over the batch.
template <class Prop>
Var loss_initial(Prop& prop, Tape& tape, const Batch& batch, Reduction r = Reduction::mean) {
  const Var v0 = tape.constant(batch.v0);
  return detail::reduce_rows(relative_l2_rows(prop.apply(v0, 0.0), v0), r);
}

/// Err(Phi_{t1+t2} v0, Phi_{t2} Phi_{t1} v0) with independent times per
/// sample. Gradients flow through both sides.
template <class Prop>
Var loss_inter(Prop& prop, Tape& tape, const Batch& batch, const TimeSamplePlan& plan, Reduction r = Reduction::mean) {
  if (plan.inter.size() != batch.size()) throw ContractError("loss_inter: plan does not match batch size");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto [t1, t2] = plan.inter[i];
    const Var v = tape.constant(batch_row(batch.v0, i));
    const Var direct = prop.apply(v, t1 + t2);
    const Var composed = prop.apply(prop.apply(v, t1), t2);
    terms.push_back(relative_l2(direct, composed));
  }
  return detail::reduce(tape, terms, r);
}

/// sum_{p=2..P} Err(Phi_{t_p} ... Phi_{t_1} v0, v_T); zero when P = 1.
template <class Prop>
Var loss_comp(Prop& prop, Tape& tape, const Batch& batch, const TimeSamplePlan& plan, Reduction r = Reduction::mean) {
  if (plan.comp.size() != batch.size()) throw ContractError("loss_comp: plan does not match batch size");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (plan.comp[i].empty()) continue;
    const Var target = tape.constant(batch_row(batch.vT, i));
    std::vector<Var> per_p;
    for (const auto& durations : plan.comp[i]) {
      Var x = tape.constant(batch_row(batch.v0, i));
      for (double t : durations) x = prop.apply(x, t);
      per_p.push_back(relative_l2(x, target));
    }
    terms.push_back(detail::reduce(tape, per_p, Reduction::sum));
  }
  return detail::reduce(tape, terms, r);
}

struct LossTerms {
  Var total;
  double final = 0.0;
  double initial = 0.0;
  double inter = 0.0;
  double comp = 0.0;
};

namespace detail {

template <class F>
Var guarded(const char* name, F&& f) {
  try {
    Var v = f();
    return v;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("loss term '") + name + "' is not finite: " + e.what());
  }
}

}  // namespace detail

/// Weighted sum of the enabled terms (weight > 0). Terms with zero weight
/// are not evaluated and report 0.
template <class Prop>
LossTerms total_loss(Prop& prop, Tape& tape, const Batch& batch, const LossWeights& w, const TimeSamplePlan& plan,
                     Reduction r = Reduction::mean) {
  w.validate();
  const std::vector<double> times = plan.times(w);
  prop.prefetch(times);
  LossTerms out;
  std::vector<Var> parts;
  auto term = [&](const char* name, double weight, double& value, auto&& f) {
    if (weight == 0.0) return;
    const Var v = detail::guarded(name, f);
    value = v.value()[0];
    parts.push_back(weight == 1.0 ? v : scale(v, weight));
  };
  term("final", w.final, out.final, [&] { return loss_final(prop, tape, batch, plan.horizon, r); });
  term("initial", w.initial, out.initial, [&] { return loss_initial(prop, tape, batch, r); });
  term("inter", w.inter, out.inter, [&] { return loss_inter(prop, tape, batch, plan, r); });
  term("comp", w.comp, out.comp, [&] { return loss_comp(prop, tape, batch, plan, r); });
  out.total = detail::guarded("total", [&] { return detail::reduce(tape, parts, Reduction::sum); });
  return out;
}

}  // namespace opflow
