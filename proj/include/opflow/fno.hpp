#pragma once

// Fourier Neural Operator whose weights arrive as one flat vector.
//
// Layout of the parameter vector (offsets in declaration order):
//
//   lift.weight              [W, Cin]
//   lift.bias                [W]
//   for l in 0..L-1:
//     layer{l}.spectral      [K, W, W, 2]   complex, K = 2^(d-1) * modes^d
//     layer{l}.pointwise.w   [W, W]
//     layer{l}.pointwise.b   [W]
//   proj.weight              [d, W]
//   proj.bias                [d]
//
// Cin = d (+ d coordinate channels). Retained modes are the non-negative
// frequencies 0..modes-1 along the last axis; in 2-D the first axis keeps
// both signs (0..modes-1 and -modes..-1). The real output comes from doubling
// every mode with a positive last-axis frequency before the inverse transform,
// which is the Hermitian completion of the half spectrum.

#include <cmath>
#include <string>
#include <vector>

#include "opflow/autodiff.hpp"
#include "opflow/field.hpp"
#include "opflow/random.hpp"

namespace opflow {

using ParamVector = Array;

struct FnoConfig {
  int d = 1;
  int width = 16;
  int modes = 12;
  int layers = 4;
  Activation activation = Activation::relu;
  bool coord_channels = true;

  std::size_t in_channels() const { return static_cast<std::size_t>(coord_channels ? 2 * d : d); }
  std::size_t out_channels() const { return static_cast<std::size_t>(d); }
  std::size_t spectral_modes() const {
    const auto m = static_cast<std::size_t>(modes);
    return d == 1 ? m : 2 * m * m;
  }

  void validate() const {
    if (d != 1 && d != 2) throw ConfigError("FnoConfig: d must be 1 or 2");
    if (modes < 1) throw ConfigError("FnoConfig: modes must be >= 1");
    if (layers < 1) throw ConfigError("FnoConfig: layers must be >= 1");
    if (width < 1) throw ConfigError("FnoConfig: width must be >= 1");
  }

  /// Grid-dependent checks: power of two and n >= 2 * modes.
  void validate_for(std::size_t n) const {
    validate();
    fft::require_power_of_two(n, "FnoConfig");
    if (n < 2 * static_cast<std::size_t>(modes)) {
      throw ConfigError("FnoConfig: grid extent " + std::to_string(n) + " < 2 * modes");
    }
  }

  bool operator==(const FnoConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  std::size_t offset;
  Shape shape;
};

/// Offset table of the flat parameter vector.
inline std::vector<ParamBlock> param_layout(const FnoConfig& cfg) {
  cfg.validate();
  const auto w = static_cast<std::size_t>(cfg.width);
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  auto add = [&](std::string name, Shape shape) {
    const std::size_t n = numel(shape);
    blocks.push_back({std::move(name), offset, std::move(shape)});
    offset += n;
  };
  add("lift.weight", {w, cfg.in_channels()});
  add("lift.bias", {w});
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    add(p + ".spectral", {cfg.spectral_modes(), w, w, 2});
    add(p + ".pointwise.weight", {w, w});
    add(p + ".pointwise.bias", {w});
  }
  add("proj.weight", {cfg.out_channels(), w});
  add("proj.bias", {cfg.out_channels()});
  return blocks;
}

/// Closed form: (Cin+1) W + L (2 K W^2 + W^2 + W) + (W+1) d.
inline std::size_t param_count(const FnoConfig& cfg) {
  cfg.validate();
  const auto w = static_cast<std::size_t>(cfg.width);
  const auto layers = static_cast<std::size_t>(cfg.layers);
  return (cfg.in_channels() + 1) * w + layers * (2 * cfg.spectral_modes() * w * w + w * w + w) +
         (w + 1) * cfg.out_channels();
}

inline std::vector<Array> unpack(const FnoConfig& cfg, const ParamVector& w) {
  if (w.size() != param_count(cfg)) throw DimensionError("unpack: parameter vector has wrong length");
  std::vector<Array> out;
  for (const auto& b : param_layout(cfg)) {
    const auto first = w.storage().begin() + static_cast<long>(b.offset);
    out.emplace_back(b.shape, std::vector<double>(first, first + static_cast<long>(numel(b.shape))));
  }
  return out;
}

inline ParamVector pack(const FnoConfig& cfg, const std::vector<Array>& blocks) {
  const auto layout = param_layout(cfg);
  if (blocks.size() != layout.size()) throw DimensionError("pack: wrong number of blocks");
  ParamVector w({param_count(cfg)});
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (blocks[i].shape() != layout[i].shape) throw DimensionError("pack: block " + layout[i].name + " has wrong shape");
    std::copy(blocks[i].storage().begin(), blocks[i].storage().end(), w.raw() + layout[i].offset);
  }
  return w;
}

/// Default initialization: affine maps U(+-1/sqrt(fan_in)); spectral
/// weights (re, im) ~ U[0, 1) / (W * W).
inline ParamVector init_params(const FnoConfig& cfg, Rng& rng) {
  ParamVector w({param_count(cfg)});
  for (const auto& b : param_layout(cfg)) {
    const std::size_t n = numel(b.shape);
    double* p = w.raw() + b.offset;
    if (b.name.ends_with(".spectral")) {
      const double s = 1.0 / static_cast<double>(cfg.width * cfg.width);
      for (std::size_t i = 0; i < n; ++i) p[i] = s * rng.uniform();
      continue;
    }
    std::size_t fan_in = 0;
    if (b.name.starts_with("lift")) fan_in = cfg.in_channels();
    else fan_in = static_cast<std::size_t>(cfg.width);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
  }
  return w;
}

/// True when identity_params can represent the identity for this activation.
inline bool has_identity_params(const FnoConfig& cfg) {
  return cfg.width >= 2 * cfg.d && (cfg.activation == Activation::relu || cfg.activation == Activation::identity);
}

/// Weights for which f is exactly the identity map: the lift writes v and -v
/// into channels 0 and 1, pointwise maps are the identity, spectral weights are
/// zero and the projection returns channel 0 minus channel 1, halved for the
/// identity activation. relu(v) - relu(-v) = v keeps this exact under relu.
inline ParamVector identity_params(const FnoConfig& cfg) {
  cfg.validate();
  if (!has_identity_params(cfg)) throw ConfigError("identity_params needs width >= 2d and a relu or identity activation");
  const auto layout = param_layout(cfg);
  ParamVector w({param_count(cfg)});
  const std::size_t cin = cfg.in_channels();
  const auto width = static_cast<std::size_t>(cfg.width);
  const double out_scale = cfg.activation == Activation::identity ? 0.5 : 1.0;
  for (std::size_t c = 0; c < cfg.out_channels(); ++c) {
    w[layout[0].offset + (2 * c) * cin + c] = 1.0;
    w[layout[0].offset + (2 * c + 1) * cin + c] = -1.0;
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& pw = layout[3 + 3 * static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < width; ++c) w[pw.offset + c * width + c] = 1.0;
  }
  const auto& proj = layout[layout.size() - 2];
  for (std::size_t c = 0; c < cfg.out_channels(); ++c) {
    w[proj.offset + c * width + 2 * c] = out_scale;
    w[proj.offset + c * width + 2 * c + 1] = -out_scale;
  }
  return w;
}

struct SpectralModes {
  std::vector<std::size_t> flat;
  std::vector<double> weight;
};

inline SpectralModes retained_modes(const FnoConfig& cfg, std::size_t n) {
  SpectralModes m;
  const auto modes = static_cast<std::size_t>(cfg.modes);
  if (cfg.d == 1) {
    for (std::size_t k = 0; k < modes; ++k) {
      m.flat.push_back(k);
      m.weight.push_back(k == 0 ? 1.0 : 2.0);
    }
    return m;
  }
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < modes; ++k) rows.push_back(k);
  for (std::size_t k = modes; k >= 1; --k) rows.push_back(n - k);
  for (std::size_t r : rows)
    for (std::size_t k = 0; k < modes; ++k) {
      m.flat.push_back(r * n + k);
      m.weight.push_back(k == 0 ? 1.0 : 2.0);
    }
  return m;
}

/// Normalized grid coordinates i/n for each spatial axis, [B, d, S...].
inline Array coordinate_channels(std::size_t batch, int d, std::size_t n) {
  const std::size_t pts = d == 1 ? n : n * n;
  Shape s{batch, static_cast<std::size_t>(d)};
  for (int a = 0; a < d; ++a) s.push_back(n);
  Array out(s);
  for (std::size_t b = 0; b < batch; ++b)
    for (int a = 0; a < d; ++a)
      for (std::size_t p = 0; p < pts; ++p) {
        const std::size_t idx = d == 1 ? p : (a == 0 ? p / n : p % n);
        out[(b * static_cast<std::size_t>(d) + static_cast<std::size_t>(a)) * pts + p] =
            static_cast<double>(idx) / static_cast<double>(n);
      }
  return out;
}

/// Fourier layer: truncate to retained modes, mix channels per mode, return
/// to physical space.
inline Var spectral_conv(Var h, Var weights, const FnoConfig& cfg) {
  const Shape& s = h.shape();
  const std::size_t n = s[2];
  const Shape spatial(s.begin() + 2, s.end());
  std::vector<std::size_t> axes;
  for (std::size_t a = 2; a < s.size(); ++a) axes.push_back(a);
  SpectralModes modes = retained_modes(cfg, n);
  Var z = fft_forward(to_complex(h), axes);
  z = gather_modes(z, modes.flat);
  z = complex_mix(z, weights);
  z = scatter_modes(z, spatial, std::move(modes.flat), std::move(modes.weight));
  return real_part(fft_inverse(z, axes));
}

/// f_w(v) for a batch v[B, d, n(, n)]; output has the same shape.
inline Var primary_forward(Tape& tape, Var w, const FnoConfig& cfg, Var v) {
  const Shape& s = v.shape();
  if (s.size() != static_cast<std::size_t>(cfg.d) + 2 || s[1] != cfg.out_channels()) {
    throw DimensionError("primary_forward: input " + to_string(s) + " does not match d=" + std::to_string(cfg.d));
  }
  const std::size_t n = s[2];
  for (std::size_t a = 2; a < s.size(); ++a)
    if (s[a] != n) throw DimensionError("primary_forward: non-square grid");
  cfg.validate_for(n);
  if (w.value().size() != param_count(cfg)) {
    throw DimensionError("primary_forward: parameter vector has " + std::to_string(w.value().size()) +
                         " entries, expected " + std::to_string(param_count(cfg)));
  }
  const auto layout = param_layout(cfg);
  auto block = [&](std::size_t i) { return slice(w, layout[i].offset, layout[i].shape); };

  Var x = v;
  if (cfg.coord_channels) x = concat_channels(v, tape.constant(coordinate_channels(s[0], cfg.d, n)));
  Var h = channel_affine(x, block(0), block(1));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::size_t base = 2 + 3 * static_cast<std::size_t>(l);
    Var spec = spectral_conv(h, block(base), cfg);
    Var local = channel_affine(h, block(base + 1), block(base + 2));
    h = add(spec, local);
    if (l + 1 < cfg.layers) h = activation(h, cfg.activation);
  }
  const std::size_t last = 2 + 3 * static_cast<std::size_t>(cfg.layers);
  return channel_affine(h, block(last), block(last + 1));
}

// ---------------------------------------------------------------- batches of fields

/// Stack fields into [B, C, n(, n)].
inline Array stack(const std::vector<Field>& fields) {
  if (fields.empty()) throw DimensionError("stack: no fields");
  Shape s{fields.size()};
  const Shape& fs = fields.front().values.shape();
  s.insert(s.end(), fs.begin(), fs.end());
  Array out(s);
  const std::size_t block = fields.front().values.size();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].values.shape() != fs) throw DimensionError("stack: inconsistent field shapes");
    std::copy_n(fields[i].values.raw(), block, out.raw() + i * block);
  }
  return out;
}

inline Field unstack(const Array& batch, std::size_t i, const Grid& grid) {
  const Shape s(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t block = numel(s);
  const auto first = batch.storage().begin() + static_cast<long>(i * block);
  return Field(grid, Array(s, std::vector<double>(first, first + static_cast<long>(block))));
}

/// Rows [i] of a batch as [1, ...].
inline Array batch_row(const Array& batch, std::size_t i) {
  Shape s = batch.shape();
  const std::size_t block = batch.size() / s[0];
  s[0] = 1;
  const auto first = batch.storage().begin() + static_cast<long>(i * block);
  return Array(s, std::vector<double>(first, first + static_cast<long>(block)));
}

/// Non-differentiable convenience wrapper.
inline Field primary_forward(const ParamVector& w, const FnoConfig& cfg, const Field& v) {
  Tape tape;
  Shape s{1};
  s.insert(s.end(), v.values.shape().begin(), v.values.shape().end());
  Var out = primary_forward(tape, tape.constant(w), cfg, tape.constant(v.values.reshaped(s)));
  return unstack(out.value(), 0, v.grid);
}

}  // namespace opflow
