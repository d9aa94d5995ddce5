#pragma once

// Trajectory datasets: generation from random initial conditions and
// persistence as kind "dataset" containers. Paths follow data/{pde}/{split}.opfl.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opflow/container.hpp"
#include "opflow/ic_sampler.hpp"
#include "opflow/parallel.hpp"
#include "opflow/random.hpp"
#include "opflow/solvers.hpp"

namespace opflow {

struct DatasetMeta {
  PdeSpec pde;
  Grid grid;
  double t_max = 1.0;
  double save_dt = 0.01;
  double dt = 1e-4;
  std::size_t n_train = 100;
  std::size_t n_test = 20;
  std::uint64_t seed = 0;
  GrfSpectrum spectrum;
  GpKernelConfig kernel;

  std::size_t snapshot_count() const { return static_cast<std::size_t>(std::llround(t_max / save_dt)) + 1; }

  std::vector<double> save_times() const {
    std::vector<double> t;
    for (std::size_t s = 0; s < snapshot_count(); ++s) t.push_back(static_cast<double>(s) * save_dt);
    return t;
  }

  void validate() const {
    pde.validate();
    grid.validate();
    if (grid.d != pde.dim()) throw ConfigError("grid dimension does not match the PDE");
    if (n_train == 0 || n_test == 0) throw ConfigError("sample counts must be positive");
    if (!(t_max > 0.0) || !(save_dt > 0.0) || !(dt > 0.0)) throw ConfigError("t_max, save_dt and dt must be positive");
    const double k = t_max / save_dt;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) throw ConfigError("t_max must be a multiple of save_dt");
    spectrum.validate();
    kernel.validate();
  }
};

inline void to_json(nlohmann::json& j, const PdeSpec& p) {
  j = {{"kind", to_string(p.kind)}, {"nu", p.nu}, {"lambda", p.lambda}, {"q", p.q}};
}
inline void from_json(const nlohmann::json& j, PdeSpec& p) {
  p.kind = pde_kind_from_string(j.at("kind").get<std::string>());
  p.nu = j.at("nu").get<double>();
  p.lambda = j.at("lambda").get<double>();
  p.q = j.at("q").get<int>();
}
inline void to_json(nlohmann::json& j, const Grid& g) { j = {{"d", g.d}, {"n", g.n}}; }
inline void from_json(const nlohmann::json& j, Grid& g) {
  g.d = j.at("d").get<int>();
  g.n = j.at("n").get<std::size_t>();
}
inline void to_json(nlohmann::json& j, const DatasetMeta& m) {
  j = {{"pde", m.pde},
       {"grid", m.grid},
       {"t_max", m.t_max},
       {"save_dt", m.save_dt},
       {"dt", m.dt},
       {"n_train", m.n_train},
       {"n_test", m.n_test},
       {"seed", m.seed},
       {"grf", {{"scale", m.spectrum.scale}, {"shift", m.spectrum.shift}, {"exponent", m.spectrum.exponent}}},
       {"gp_kernel", {{"sigma", m.kernel.sigma}, {"ell", m.kernel.ell}}}};
}
inline void from_json(const nlohmann::json& j, DatasetMeta& m) {
  m.pde = j.at("pde").get<PdeSpec>();
  m.grid = j.at("grid").get<Grid>();
  m.t_max = j.at("t_max").get<double>();
  m.save_dt = j.at("save_dt").get<double>();
  m.dt = j.at("dt").get<double>();
  m.n_train = j.at("n_train").get<std::size_t>();
  m.n_test = j.at("n_test").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& g = j.at("grf");
  m.spectrum = {g.at("scale").get<double>(), g.at("shift").get<double>(), g.at("exponent").get<double>()};
  const auto& k = j.at("gp_kernel");
  m.kernel = {k.at("sigma").get<double>(), k.at("ell").get<double>()};
}

/// One split. fields has shape [N, S, C, n(, n)] for S snapshot times.
struct Dataset {
  std::string split;
  DatasetMeta meta;
  std::vector<double> times;
  Array fields;

  std::size_t size() const { return fields.rank() ? fields.extent(0) : 0; }
  std::size_t snapshots() const { return times.size(); }
  std::size_t field_size() const { return meta.grid.points() * meta.pde.channels(); }

  /// Snapshot index of time t; CoverageError when no stored time is within 1e-9.
  std::size_t time_index(double t) const {
    for (std::size_t s = 0; s < times.size(); ++s)
      if (std::abs(times[s] - t) <= 1e-9) return s;
    throw CoverageError("dataset has no snapshot at t=" + std::to_string(t));
  }

  Field at(std::size_t sample, std::size_t snapshot) const {
    const std::size_t block = field_size();
    const auto first = fields.storage().begin() + static_cast<long>((sample * snapshots() + snapshot) * block);
    return Field(meta.grid, Array(Field::shape_for(meta.grid, meta.pde.channels()),
                                  std::vector<double>(first, first + static_cast<long>(block))));
  }

  /// Snapshot s of the given samples, stacked [B, C, n(, n)].
  Array batch(std::size_t snapshot, const std::vector<std::size_t>& samples) const {
    const std::size_t block = field_size();
    Shape s{samples.size()};
    const Shape fs = Field::shape_for(meta.grid, meta.pde.channels());
    s.insert(s.end(), fs.begin(), fs.end());
    Array out(s);
    for (std::size_t b = 0; b < samples.size(); ++b) {
      if (samples[b] >= size()) throw DimensionError("sample index out of range");
      std::copy_n(fields.raw() + (samples[b] * snapshots() + snapshot) * block, block, out.raw() + b * block);
    }
    return out;
  }

  Array batch(std::size_t snapshot) const {
    std::vector<std::size_t> all(size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return batch(snapshot, all);
  }
};

/// Random initial condition number `index` of a split.
inline Field sample_initial_condition(const DatasetMeta& meta, const std::string& split, std::size_t index) {
  const std::uint64_t seed = derive_seed(meta.seed, "data/" + split, index);
  if (meta.grid.d == 1) return sample_grf_1d(meta.grid, seed, meta.spectrum);
  return sample_gp_2d_velocity(meta.grid, meta.kernel, seed);
}

/// Solves `count` trajectories in parallel; output order is by sample index.
inline Dataset generate_split(const DatasetMeta& meta, const std::string& split) {
  meta.validate();
  const std::size_t count = split == "train" ? meta.n_train : meta.n_test;
  Dataset ds{split, meta, meta.save_times(), Array()};
  const std::size_t block = ds.field_size();
  const std::size_t snaps = ds.times.size();
  Shape s{count, snaps};
  const Shape fs = Field::shape_for(meta.grid, meta.pde.channels());
  s.insert(s.end(), fs.begin(), fs.end());
  ds.fields = Array(s);
  SolveConfig cfg;
  cfg.dt = meta.dt;
  cfg.save_times = ds.times;
  parallel_for(count, [&](std::size_t i) {
    const Field v0 = sample_initial_condition(meta, split, i);
    const std::vector<Snapshot> traj = solve(meta.pde, v0, cfg);
    for (std::size_t k = 0; k < snaps; ++k)
      std::copy_n(traj[k].field.values.raw(), block, ds.fields.raw() + (i * snaps + k) * block);
  });
  return ds;
}

inline Container to_container(const Dataset& ds) {
  Container c;
  c.kind = "dataset";
  c.meta = {{"split", ds.split}, {"dataset", ds.meta}, {"n", ds.size()}};
  c.put("times", Array({ds.times.size()}, ds.times));
  c.put("fields", ds.fields);
  return c;
}

inline Dataset dataset_from_container(const Container& c) {
  if (c.kind != "dataset") throw FormatError("expected a dataset container, found kind '" + c.kind + "'");
  Dataset ds;
  try {
    ds.split = c.meta.at("split").get<std::string>();
    ds.meta = c.meta.at("dataset").get<DatasetMeta>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
  const Array& t = c.get("times");
  ds.times.assign(t.storage().begin(), t.storage().end());
  ds.fields = c.get("fields");
  const std::size_t declared = c.meta.value("n", std::size_t{0});
  if (ds.fields.rank() < 3 || ds.fields.extent(0) < declared) {
    throw TruncatedError("dataset declares " + std::to_string(declared) + " samples but holds fewer");
  }
  Shape expected{declared, ds.times.size()};
  const Shape fs = Field::shape_for(ds.meta.grid, ds.meta.pde.channels());
  expected.insert(expected.end(), fs.begin(), fs.end());
  if (ds.fields.shape() != expected) {
    throw FormatError("fields record " + to_string(ds.fields.shape()) + " does not match header " + to_string(expected));
  }
  return ds;
}

inline std::filesystem::path dataset_path(const std::filesystem::path& root, PdeKind pde, const std::string& split) {
  return root / to_string(pde) / (split + ".opfl");
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) { write_container(path, to_container(ds)); }
inline Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_container(read_container(path)); }

}  // namespace opflow
