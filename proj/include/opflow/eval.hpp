#pragma once

// Evaluation: per-sample Err statistics at T and along the trajectory, the
// linear-interpolation baseline, unit-interval extrapolation past T, energy
// diagnostics, and CSV/plot-script output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "opflow/dataset.hpp"
#include "opflow/hypernet.hpp"
#include "opflow/losses.hpp"
#include "opflow/parallel.hpp"

namespace opflow {

/// Nearest-rank percentile: the ceil(p/100 * N)-th smallest value.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw MetricError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

struct ErrStats {
  std::size_t n = 0;
  double mean = 0.0;
  double p10 = 0.0;
  double p25 = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
};

inline ErrStats summarize(const std::vector<double>& errs) {
  ErrStats s;
  s.n = errs.size();
  for (double e : errs) s.mean += e;
  s.mean /= static_cast<double>(errs.size());
  s.p10 = percentile(errs, 10);
  s.p25 = percentile(errs, 25);
  s.median = percentile(errs, 50);
  s.p75 = percentile(errs, 75);
  s.p90 = percentile(errs, 90);
  return s;
}

/// Pieces used to reach time t: t itself up to T, otherwise floor(t/T) unit
/// steps followed by the residual (2.3 -> 1, 1, 0.3).
inline std::vector<double> extrapolation_intervals(double t, double horizon = 1.0) {
  if (!(t >= 0.0)) throw ConfigError("time must be non-negative");
  constexpr double tol = 1e-9;
  if (t <= horizon + tol) return {std::abs(t - horizon) <= tol ? horizon : t};
  const auto units = static_cast<std::size_t>(std::floor(t / horizon + tol));
  std::vector<double> out(units, horizon);
  const double residual = t - static_cast<double>(units) * horizon;
  if (residual > tol) out.push_back(residual);
  return out;
}

inline Array extrapolate_batch(const HyperModel& model, const Array& v0, double t, double horizon = 1.0) {
  Array x = v0;
  for (double piece : extrapolation_intervals(t, horizon)) x = propagate_batch(model, x, piece);
  return x;
}

inline Field extrapolate(const HyperModel& model, const Field& v0, double t, double horizon = 1.0) {
  Shape s{1};
  s.insert(s.end(), v0.values.shape().begin(), v0.values.shape().end());
  return unstack(extrapolate_batch(model, v0.values.reshaped(s), t, horizon), 0, v0.grid);
}

/// (1 - t/T) v0 + (t/T) vT.
inline Array linear_baseline(const Array& v0, const Array& vT, double t, double horizon = 1.0) {
  v0.require_same_shape(vT, "linear_baseline");
  const double a = t / horizon;
  Array out(v0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - a) * v0[i] + a * vT[i];
  return out;
}

inline Field linear_baseline(const Field& v0, const Field& vT, double t, double horizon = 1.0) {
  return Field(v0.grid, linear_baseline(v0.values, vT.values, t, horizon));
}

/// Per-sample Err of each row of `pred` against the same row of `truth`.
inline std::vector<double> row_errors(const Array& pred, const Array& truth) {
  pred.require_same_shape(truth, "row_errors");
  const std::size_t rows = pred.extent(0);
  const std::size_t block = pred.size() / rows;
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    out[i] = err(pred.data().subspan(i * block, block), truth.data().subspan(i * block, block));
  }
  return out;
}

/// Applies `f` to chunks of the batch in parallel and reassembles in order.
template <class F>
Array map_batch(const Array& batch, F&& f, std::size_t chunk = 16) {
  const std::size_t rows = batch.extent(0);
  const std::size_t block = batch.size() / rows;
  const std::size_t chunks = (rows + chunk - 1) / chunk;
  Array out(batch.shape());
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(rows, lo + chunk);
    Shape s = batch.shape();
    s[0] = hi - lo;
    Array part(s, std::vector<double>(batch.storage().begin() + static_cast<long>(lo * block),
                                      batch.storage().begin() + static_cast<long>(hi * block)));
    const Array res = f(part);
    std::copy_n(res.raw(), res.size(), out.raw() + lo * block);
  });
  return out;
}

inline Array predict(const HyperModel& model, const Array& v0, double t, double horizon = 1.0) {
  return map_batch(v0, [&](const Array& part) { return extrapolate_batch(model, part, t, horizon); });
}

/// Err(Phi_t v(0), v(t)) for every sample of the dataset.
inline std::vector<double> errors_at(const HyperModel& model, const Dataset& ds, double t, double horizon = 1.0) {
  const std::size_t s = ds.time_index(t);
  return row_errors(predict(model, ds.batch(0), t, horizon), ds.batch(s));
}

inline ErrStats eval_at_T(const HyperModel& model, const Dataset& ds, double horizon = 1.0) {
  return summarize(errors_at(model, ds, horizon, horizon));
}

/// Err(Phi_0 v, v) per sample.
inline std::vector<double> initial_errors(const HyperModel& model, const Dataset& ds) {
  const Array v0 = ds.batch(0);
  return row_errors(predict(model, v0, 0.0), v0);
}

/// Err(Phi_{t2} Phi_{t1} v, Phi_{t1 + t2} v) per sample.
inline std::vector<double> composition_gaps(const HyperModel& model, const Dataset& ds, double t1, double t2) {
  const Array v0 = ds.batch(0);
  const Array composed =
      map_batch(v0, [&](const Array& p) { return propagate_batch(model, propagate_batch(model, p, t1), t2); });
  return row_errors(composed, predict(model, v0, t1 + t2));
}

struct SweepRow {
  double time = 0.0;
  ErrStats model;
  ErrStats linear;
  std::optional<ErrStats> reference;
};

struct EnergyRow {
  double time = 0.0;
  std::size_t sample = 0;
  double truth = 0.0;
  double model = 0.0;
  bool increased = false;
};

struct EvalReport {
  ErrStats at_T;
  std::optional<ErrStats> reference_at_T;
  std::vector<SweepRow> sweep;
  std::vector<EnergyRow> energy;
  std::size_t energy_increases = 0;
};

/// Sweep times 0, dt, 2 dt, ... up to t_end (the last one snapped onto t_end).
inline std::vector<double> sweep_times(double dt, double t_end) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw ConfigError("sweep needs dt > 0 and t_end >= 0");
  std::vector<double> t;
  const auto steps = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) t.push_back(static_cast<double>(k) * dt);
  if (t_end - t.back() > 1e-9) t.push_back(t_end);
  return t;
}

/// Per-time Err statistics of the model, the linear baseline and an optional
/// reference model against the stored trajectories.
inline EvalReport sweep_intermediate(const HyperModel& model, const Dataset& ds, double dt, double t_end,
                                     const HyperModel* reference = nullptr, double horizon = 1.0) {
  const std::vector<double> times = sweep_times(dt, t_end);
  std::vector<std::size_t> index;
  for (double t : times) index.push_back(ds.time_index(t));
  const std::size_t t_index = ds.time_index(horizon);

  EvalReport report;
  const Array v0 = ds.batch(0);
  const Array vT = ds.batch(t_index);
  const std::size_t rows = ds.size();
  const double cell = std::pow(ds.meta.grid.spacing(), ds.meta.grid.d);
  std::vector<double> prev_energy(rows, 0.0);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    const Array truth = ds.batch(index[k]);
    const Array pred = predict(model, v0, t, horizon);
    SweepRow row;
    row.time = t;
    row.model = summarize(row_errors(pred, truth));
    row.linear = summarize(row_errors(linear_baseline(v0, vT, t, horizon), truth));
    if (reference) row.reference = summarize(row_errors(predict(*reference, v0, t, horizon), truth));
    report.sweep.push_back(row);

    const std::size_t block = pred.size() / rows;
    for (std::size_t i = 0; i < rows; ++i) {
      EnergyRow e{t, i, 0.0, 0.0, false};
      for (std::size_t j = 0; j < block; ++j) {
        e.truth += 0.5 * cell * truth[i * block + j] * truth[i * block + j];
        e.model += 0.5 * cell * pred[i * block + j] * pred[i * block + j];
      }
      e.increased = k > 0 && e.model > prev_energy[i];
      report.energy_increases += e.increased ? 1 : 0;
      prev_energy[i] = e.model;
      report.energy.push_back(e);
    }
  }
  report.at_T = summarize(row_errors(predict(model, v0, horizon, horizon), vT));
  if (reference) report.reference_at_T = summarize(row_errors(predict(*reference, v0, horizon, horizon), vT));
  return report;
}

namespace detail {

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Band chart of the per-time error distribution in sweep.csv."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(path="sweep.csv", out="sweep.png"):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    col = lambda name: [float(r[name]) for r in rows]
    t = col("time")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(t, col("p10"), col("p90"), color="tab:blue", alpha=0.2, label="10-90%")
    ax.fill_between(t, col("p25"), col("p75"), color="tab:blue", alpha=0.4, label="25-75%")
    ax.plot(t, col("p50"), color="tab:blue", label="median")
    ax.plot(t, col("linear_p50"), color="tab:gray", linestyle=":", label="linear interpolation")
    summary = os.path.join(os.path.dirname(path) or ".", "summary.csv")
    if os.path.exists(summary):
        with open(summary) as f:
            metrics = {r["metric"]: float(r["value"]) for r in csv.DictReader(f)}
        if "reference_err_T_median" in metrics:
            ax.axhline(metrics["reference_err_T_median"], color="c", linestyle="--", label="FNO at T")
    ax.set_xlabel("t")
    ax.set_ylabel("relative L2 error")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
)PY";

/// Writes sweep.csv, summary.csv, energy.csv and plot_sweep.py into out_dir.
inline void emit(const EvalReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    auto out = detail::open_out(out_dir / "sweep.csv");
    out << "time,p10,p25,p50,p75,p90,mean,linear_p50,linear_mean,reference_p50,reference_mean\n";
    for (const auto& row : r.sweep) {
      const double nan = std::nan("");
      out << detail::fmt(row.time) << ',' << detail::fmt(row.model.p10) << ',' << detail::fmt(row.model.p25) << ','
          << detail::fmt(row.model.median) << ',' << detail::fmt(row.model.p75) << ',' << detail::fmt(row.model.p90)
          << ',' << detail::fmt(row.model.mean) << ',' << detail::fmt(row.linear.median) << ','
          << detail::fmt(row.linear.mean) << ',' << detail::fmt(row.reference ? row.reference->median : nan) << ','
          << detail::fmt(row.reference ? row.reference->mean : nan) << '\n';
    }
  }
  {
    auto out = detail::open_out(out_dir / "summary.csv");
    out << "metric,value\n";
    out << "err_T_mean," << detail::fmt(r.at_T.mean) << '\n';
    out << "err_T_median," << detail::fmt(r.at_T.median) << '\n';
    if (r.reference_at_T) {
      out << "reference_err_T_mean," << detail::fmt(r.reference_at_T->mean) << '\n';
      out << "reference_err_T_median," << detail::fmt(r.reference_at_T->median) << '\n';
    }
    out << "samples," << r.at_T.n << '\n';
    out << "energy_increases," << r.energy_increases << '\n';
  }
  {
    auto out = detail::open_out(out_dir / "energy.csv");
    out << "time,sample,truth_energy,model_energy,model_increased\n";
    for (const auto& e : r.energy) {
      out << detail::fmt(e.time) << ',' << e.sample << ',' << detail::fmt(e.truth) << ',' << detail::fmt(e.model)
          << ',' << (e.increased ? 1 : 0) << '\n';
    }
  }
  auto out = detail::open_out(out_dir / "plot_sweep.py");
  out << kPlotScript;
}

}  // namespace opflow
