#pragma once

// Pseudo-spectral ground-truth integrators on the periodic box.
//
// Time stepping is integrating-factor RK4: the diagonal linear part
// (diffusion) is propagated exactly by exp(L dt), the nonlinear part is
// evaluated in physical space with 2/3-rule truncation.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "opflow/fft.hpp"
#include "opflow/field.hpp"

namespace opflow {

enum class PdeKind { gen_burgers, chafee_infante, burgers2d, ns2d };

inline const char* to_string(PdeKind k) {
  switch (k) {
    case PdeKind::gen_burgers: return "gen-burgers";
    case PdeKind::chafee_infante: return "chafee-infante";
    case PdeKind::burgers2d: return "burgers2d";
    case PdeKind::ns2d: return "ns2d";
  }
  return "?";
}

inline PdeKind pde_kind_from_string(const std::string& s) {
  if (s == "gen-burgers") return PdeKind::gen_burgers;
  if (s == "chafee-infante") return PdeKind::chafee_infante;
  if (s == "burgers2d") return PdeKind::burgers2d;
  if (s == "ns2d") return PdeKind::ns2d;
  throw ConfigError("unknown PDE '" + s + "' (expected gen-burgers, chafee-infante, burgers2d, ns2d)");
}

/// gen_burgers:    v_t + v^q v_x = nu v_xx
/// chafee_infante: v_t + lambda (v^3 - v) = v_xx
/// burgers2d:      v_t + (v . grad) v = nu lap v
/// ns2d:           incompressible Navier-Stokes, vorticity form
struct PdeSpec {
  PdeKind kind = PdeKind::gen_burgers;
  double nu = 0.1;
  double lambda = 1.0;
  int q = 1;

  int dim() const { return kind == PdeKind::burgers2d || kind == PdeKind::ns2d ? 2 : 1; }
  std::size_t channels() const { return static_cast<std::size_t>(dim()); }

  void validate() const {
    if (kind == PdeKind::gen_burgers && (q < 1 || q > 4)) {
      throw ConfigError("gen-burgers requires q in {1,2,3,4}, got " + std::to_string(q));
    }
    if (kind != PdeKind::chafee_infante && !(nu > 0.0)) throw ConfigError("viscosity nu must be positive");
    if (kind == PdeKind::chafee_infante && !std::isfinite(lambda)) throw ConfigError("lambda must be finite");
  }
};

struct SolveConfig {
  double dt = 1e-4;
  std::vector<double> save_times;
  bool dealias = true;
};

struct Snapshot {
  double time;
  Field field;
};

struct SolveStats {
  std::size_t steps = 0;
  double max_imag_residue = 0.0;
};

namespace detail {

/// Wavenumbers, de-aliasing mask and transforms for one grid.
class SpectralGrid {
 public:
  SpectralGrid(const Grid& grid, bool dealias) : grid_(grid), plan_(grid.n) {
    grid.validate();
    const std::size_t n = grid.n;
    const std::size_t pts = grid.points();
    kx_.resize(pts);
    ky_.resize(pts);
    ksq_.resize(pts);
    mask_.resize(pts);
    const long cutoff = static_cast<long>(n) / 3;
    auto deriv_k = [n](std::size_t i) {
      return i == n / 2 ? 0.0 : static_cast<double>(fft::wavenumber(i, n));
    };
    for (std::size_t p = 0; p < pts; ++p) {
      const std::size_t i = grid.d == 1 ? p : p / n;
      const std::size_t j = grid.d == 1 ? 0 : p % n;
      const long wi = fft::wavenumber(i, n);
      const long wj = grid.d == 1 ? 0 : fft::wavenumber(j, n);
      kx_[p] = deriv_k(i);
      ky_[p] = grid.d == 1 ? 0.0 : deriv_k(j);
      ksq_[p] = static_cast<double>(wi * wi + wj * wj);
      const bool keep = !dealias || (std::abs(wi) <= cutoff && std::abs(wj) <= cutoff);
      mask_[p] = keep ? 1.0 : 0.0;
    }
  }

  const Grid& grid() const { return grid_; }
  std::size_t points() const { return grid_.points(); }
  double kx(std::size_t p) const { return kx_[p]; }
  double ky(std::size_t p) const { return ky_[p]; }
  double ksq(std::size_t p) const { return ksq_[p]; }
  double mask(std::size_t p) const { return mask_[p]; }

  void forward(std::vector<Complex>& z) const { apply(z, fft::Direction::forward); }
  void inverse(std::vector<Complex>& z) const { apply(z, fft::Direction::inverse); }

  std::vector<Complex> to_spectral(const double* values) const {
    std::vector<Complex> z(values, values + points());
    forward(z);
    return z;
  }

  /// Physical values of `spec` multiplied by `factor(p)` in Fourier space.
  template <class F>
  std::vector<double> physical(const std::vector<Complex>& spec, F&& factor) const {
    std::vector<Complex> z(points());
    for (std::size_t p = 0; p < points(); ++p) z[p] = spec[p] * factor(p);
    inverse(z);
    std::vector<double> out(points());
    for (std::size_t p = 0; p < points(); ++p) out[p] = z[p].real();
    return out;
  }

  double imag_residue(const std::vector<Complex>& spec) const {
    std::vector<Complex> z = spec;
    inverse(z);
    double m = 0.0;
    for (const auto& c : z) m = std::max(m, std::abs(c.imag()));
    return m;
  }

 private:
  void apply(std::vector<Complex>& z, fft::Direction dir) const {
    if (grid_.d == 1) {
      plan_.execute(z, dir);
    } else {
      const std::size_t dims[2] = {grid_.n, grid_.n};
      fft::transform(z, dims, dir);
    }
  }

  Grid grid_;
  fft::Plan plan_;
  std::vector<double> kx_, ky_, ksq_, mask_;
};

using SpectralState = std::vector<std::vector<Complex>>;
using Nonlinear = std::function<SpectralState(const SpectralState&, double time)>;

inline void check_blowup(const std::vector<double>& u, double time) {
  for (double x : u) {
    if (!std::isfinite(x) || std::abs(x) > 1e6) {
      throw InstabilityError("solution blew up (|v| > 1e6 or NaN) at t=" + std::to_string(time), time);
    }
  }
}

/// Step indices for each save time; each must be a multiple of dt.
inline std::vector<std::size_t> save_steps(const SolveConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  std::vector<std::size_t> steps;
  double prev = -1.0;
  for (double t : cfg.save_times) {
    if (t < 0.0 || t < prev) throw ConfigError("save_times must be ascending and non-negative");
    prev = t;
    const double ratio = std::round(t / cfg.dt);
    if (std::abs(ratio * cfg.dt - t) > 1e-12 * std::max(1.0, t)) {
      throw ConfigError("save time " + std::to_string(t) + " is not a multiple of dt");
    }
    steps.push_back(static_cast<std::size_t>(ratio));
  }
  return steps;
}

/// Integrating-factor RK4 (Lawson) on a diagonal linear operator `lin`.
template <class Emit>
SolveStats integrate(SpectralState state, const std::vector<double>& lin, const Nonlinear& nonlinear,
                     const SolveConfig& cfg, Emit&& emit) {
  const std::vector<std::size_t> steps = save_steps(cfg);
  const double h = cfg.dt;
  const std::size_t pts = lin.size();
  std::vector<double> e_half(pts), e_full(pts);
  for (std::size_t p = 0; p < pts; ++p) {
    e_half[p] = std::exp(lin[p] * h / 2.0);
    e_full[p] = std::exp(lin[p] * h);
  }
  const std::size_t comps = state.size();
  SolveStats stats;
  std::size_t next = 0;
  std::size_t step = 0;
  auto flush = [&] {
    while (next < steps.size() && steps[next] == step) {
      emit(static_cast<double>(step) * h, state, stats);
      ++next;
    }
  };
  flush();
  SpectralState stage(comps, std::vector<Complex>(pts));
  while (next < steps.size()) {
    const double t = static_cast<double>(step) * h;
    const SpectralState k1 = nonlinear(state, t);
    for (std::size_t c = 0; c < comps; ++c)
      for (std::size_t p = 0; p < pts; ++p) stage[c][p] = e_half[p] * (state[c][p] + 0.5 * h * k1[c][p]);
    const SpectralState k2 = nonlinear(stage, t + h / 2);
    for (std::size_t c = 0; c < comps; ++c)
      for (std::size_t p = 0; p < pts; ++p) stage[c][p] = e_half[p] * state[c][p] + 0.5 * h * k2[c][p];
    const SpectralState k3 = nonlinear(stage, t + h / 2);
    for (std::size_t c = 0; c < comps; ++c)
      for (std::size_t p = 0; p < pts; ++p) stage[c][p] = e_full[p] * state[c][p] + e_half[p] * h * k3[c][p];
    const SpectralState k4 = nonlinear(stage, t + h);
    for (std::size_t c = 0; c < comps; ++c)
      for (std::size_t p = 0; p < pts; ++p) {
        state[c][p] = e_full[p] * state[c][p] +
                      h / 6.0 * (e_full[p] * k1[c][p] + 2.0 * e_half[p] * (k2[c][p] + k3[c][p]) + k4[c][p]);
      }
    ++step;
    stats.steps = step;
    flush();
  }
  return stats;
}

}  // namespace detail

/// Vorticity-streamfunction Navier-Stokes on the 2-D torus. The input velocity
/// is projected onto its divergence-free part (plus mean flow).
inline std::vector<Snapshot> solve_ns2d(double nu, const Field& v0, const SolveConfig& cfg,
                                        SolveStats* stats_out = nullptr) {
  if (!(nu > 0.0)) throw ConfigError("viscosity nu must be positive");
  if (v0.grid.d != 2 || v0.channels() != 2) throw DimensionError("solve_ns2d: expected a 2-component 2-D field");
  const detail::SpectralGrid sg(v0.grid, cfg.dealias);
  const std::size_t pts = sg.points();
  const std::vector<Complex> u_hat = sg.to_spectral(v0.values.raw());
  const std::vector<Complex> v_hat = sg.to_spectral(v0.values.raw() + pts);
  const double mean_u = u_hat[0].real() / static_cast<double>(pts);
  const double mean_v = v_hat[0].real() / static_cast<double>(pts);
  const Complex I(0.0, 1.0);

  detail::SpectralState state(1, std::vector<Complex>(pts));
  for (std::size_t p = 0; p < pts; ++p) state[0][p] = I * sg.kx(p) * v_hat[p] - I * sg.ky(p) * u_hat[p];

  std::vector<double> lin(pts);
  for (std::size_t p = 0; p < pts; ++p) lin[p] = -nu * sg.ksq(p);

  auto inv_lap = [&sg](std::size_t p) { return sg.ksq(p) > 0.0 ? 1.0 / sg.ksq(p) : 0.0; };

  detail::Nonlinear nonlinear = [&](const detail::SpectralState& s, double time) {
    const auto& w = s[0];
    // u = psi_y, v = -psi_x with psi = w / |k|^2
    std::vector<double> u = sg.physical(w, [&](std::size_t p) { return sg.mask(p) * I * sg.ky(p) * inv_lap(p); });
    std::vector<double> v = sg.physical(w, [&](std::size_t p) { return -sg.mask(p) * I * sg.kx(p) * inv_lap(p); });
    const std::vector<double> wx = sg.physical(w, [&](std::size_t p) { return sg.mask(p) * I * sg.kx(p); });
    const std::vector<double> wy = sg.physical(w, [&](std::size_t p) { return sg.mask(p) * I * sg.ky(p); });
    std::vector<Complex> adv(pts);
    for (std::size_t p = 0; p < pts; ++p) {
      u[p] += mean_u;
      v[p] += mean_v;
      adv[p] = u[p] * wx[p] + v[p] * wy[p];
    }
    detail::check_blowup(u, time);
    detail::check_blowup(v, time);
    sg.forward(adv);
    detail::SpectralState out(1, std::vector<Complex>(pts));
    for (std::size_t p = 0; p < pts; ++p) out[0][p] = -sg.mask(p) * adv[p];
    return out;
  };

  std::vector<Snapshot> result;
  auto emit = [&](double time, const detail::SpectralState& s, SolveStats& stats) {
    const auto& w = s[0];
    Field f(v0.grid, 2);
    const std::vector<double> u = sg.physical(w, [&](std::size_t p) { return I * sg.ky(p) * inv_lap(p); });
    const std::vector<double> v = sg.physical(w, [&](std::size_t p) { return -I * sg.kx(p) * inv_lap(p); });
    for (std::size_t p = 0; p < pts; ++p) {
      f.values[p] = u[p] + mean_u;
      f.values[pts + p] = v[p] + mean_v;
    }
    stats.max_imag_residue = std::max(stats.max_imag_residue, sg.imag_residue(w));
    result.push_back({time, std::move(f)});
  };
  const SolveStats stats = detail::integrate(std::move(state), lin, nonlinear, cfg, emit);
  if (stats_out) *stats_out = stats;
  return result;
}

/// Integrate `spec` from v0 and return the field at every save time.
inline std::vector<Snapshot> solve(const PdeSpec& spec, const Field& v0, const SolveConfig& cfg,
                                   SolveStats* stats_out = nullptr) {
  spec.validate();
  if (v0.grid.d != spec.dim() || v0.channels() != spec.channels()) {
    throw DimensionError(std::string("solve: initial field does not match ") + to_string(spec.kind));
  }
  if (spec.kind == PdeKind::ns2d) return solve_ns2d(spec.nu, v0, cfg, stats_out);

  const detail::SpectralGrid sg(v0.grid, cfg.dealias);
  const std::size_t pts = sg.points();
  const std::size_t comps = spec.channels();
  const Complex I(0.0, 1.0);

  detail::SpectralState state(comps);
  for (std::size_t c = 0; c < comps; ++c) state[c] = sg.to_spectral(v0.values.raw() + c * pts);

  std::vector<double> lin(pts);
  const double diffusion = spec.kind == PdeKind::chafee_infante ? 1.0 : spec.nu;
  for (std::size_t p = 0; p < pts; ++p) lin[p] = -diffusion * sg.ksq(p);

  auto masked = [&sg](std::size_t p) { return Complex(sg.mask(p), 0.0); };

  detail::Nonlinear nonlinear;
  switch (spec.kind) {
    case PdeKind::gen_burgers: {
      // v^q v_x = (v^{q+1})_x / (q + 1)
      const int q = spec.q;
      nonlinear = [&sg, pts, q, I, masked](const detail::SpectralState& s, double time) {
        const std::vector<double> u = sg.physical(s[0], masked);
        detail::check_blowup(u, time);
        std::vector<Complex> flux(pts);
        for (std::size_t p = 0; p < pts; ++p) flux[p] = std::pow(u[p], q + 1);
        sg.forward(flux);
        detail::SpectralState out(1, std::vector<Complex>(pts));
        const double inv = 1.0 / static_cast<double>(q + 1);
        for (std::size_t p = 0; p < pts; ++p) out[0][p] = -inv * sg.mask(p) * I * sg.kx(p) * flux[p];
        return out;
      };
      break;
    }
    case PdeKind::chafee_infante: {
      const double lambda = spec.lambda;
      nonlinear = [&sg, pts, lambda, masked](const detail::SpectralState& s, double time) {
        const std::vector<double> u = sg.physical(s[0], masked);
        detail::check_blowup(u, time);
        std::vector<Complex> cube(pts);
        for (std::size_t p = 0; p < pts; ++p) cube[p] = u[p] * u[p] * u[p];
        sg.forward(cube);
        detail::SpectralState out(1, std::vector<Complex>(pts));
        for (std::size_t p = 0; p < pts; ++p) out[0][p] = lambda * (s[0][p] - sg.mask(p) * cube[p]);
        return out;
      };
      break;
    }
    case PdeKind::burgers2d: {
      nonlinear = [&sg, pts, I, masked](const detail::SpectralState& s, double time) {
        const std::vector<double> u = sg.physical(s[0], masked);
        const std::vector<double> v = sg.physical(s[1], masked);
        detail::check_blowup(u, time);
        detail::check_blowup(v, time);
        detail::SpectralState out(2, std::vector<Complex>(pts));
        for (std::size_t c = 0; c < 2; ++c) {
          const std::vector<double> dx = sg.physical(s[c], [&](std::size_t p) { return sg.mask(p) * I * sg.kx(p); });
          const std::vector<double> dy = sg.physical(s[c], [&](std::size_t p) { return sg.mask(p) * I * sg.ky(p); });
          std::vector<Complex> adv(pts);
          for (std::size_t p = 0; p < pts; ++p) adv[p] = u[p] * dx[p] + v[p] * dy[p];
          sg.forward(adv);
          for (std::size_t p = 0; p < pts; ++p) out[c][p] = -sg.mask(p) * adv[p];
        }
        return out;
      };
      break;
    }
    case PdeKind::ns2d: break;
  }

  std::vector<Snapshot> result;
  auto emit = [&](double time, const detail::SpectralState& s, SolveStats& stats) {
    Field f(v0.grid, comps);
    for (std::size_t c = 0; c < comps; ++c) {
      const std::vector<double> u = sg.physical(s[c], [](std::size_t) { return Complex(1.0, 0.0); });
      std::copy(u.begin(), u.end(), f.values.raw() + c * pts);
      stats.max_imag_residue = std::max(stats.max_imag_residue, sg.imag_residue(s[c]));
    }
    result.push_back({time, std::move(f)});
  };
  const SolveStats stats = detail::integrate(std::move(state), lin, nonlinear, cfg, emit);
  if (stats_out) *stats_out = stats;
  return result;
}

}  // namespace opflow
