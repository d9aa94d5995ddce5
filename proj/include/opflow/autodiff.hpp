#pragma once

// Recording reverse-mode differentiation over dense arrays.
//
// Every op appends one node to a Tape holding its value and a backward
// closure. Node ids are assigned in creation order, so inputs always precede
// their consumers and a single reverse sweep visits each node once.
//
// Complex data is interleaved (re, im) in a trailing extent of 2 and treated
// as pairs of independent reals; all complex ops here are R^2-linear, so the
// gradient of a real loss is the conjugate-transposed map applied to the
// output gradient.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <string>
#include <vector>

#include "opflow/array.hpp"
#include "opflow/fft.hpp"

namespace opflow {

enum class Activation { relu, gelu, tanh, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Array& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Array value, bool requires_grad = true) {
    nodes_.push_back(Node{"leaf", std::move(value), {}, requires_grad, false, nullptr});
    return {this, nodes_.size() - 1};
  }

  Var constant(Array value) { return leaf(std::move(value), false); }

  /// Append an op result. The backward closure is kept only when some input
  /// needs a gradient.
  Var record(const char* op, Array value, std::initializer_list<Var> inputs, Backward backward) {
    if (!value.all_finite()) {
      throw NumericalError(std::string("non-finite value produced by op '") + op + "'");
    }
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape != this) throw ContractError(std::string(op) + ": input recorded on another tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{op, std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
    return {this, nodes_.size() - 1};
  }

  const Array& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const char* op_name(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator for `v`, zero-initialized on first touch.
  Array& grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
      n.grad = Array::zeros_like(n.value);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient after backward(); zeros when nothing flowed into `v`.
  const Array& grad(Var v) { return grad_slot(v); }

  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss recorded on another tape");
    if (value(loss).size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + to_string(value(loss).shape()));
    }
    grad_slot(loss)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      // Closures may append grad slots to other nodes but never new nodes.
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    const char* op;
    Array value;
    Array grad;
    bool requires_grad;
    bool has_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape->value(*this); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap mat(const Array& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return {a.raw() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline MatMap mat(Array& a, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return {a.raw() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
}

/// Run `f(grad)` only if `v` takes part in differentiation.
template <class F>
void accumulate(Tape& tape, Var v, F&& f) {
  if (tape.requires_grad(v)) f(tape.grad_slot(v));
}

inline double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double gaussian_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::gelu: return x * gaussian_cdf(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

inline double activate_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::gelu: return gaussian_cdf(x) + x * gaussian_pdf(x);
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

/// Spatial extents of a [B, C, S..., 2] complex array.
inline Shape spatial_dims(const Shape& s, std::size_t leading) {
  return Shape(s.begin() + static_cast<long>(leading), s.end() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Array out = a.value();
  out += b.value();
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    detail::accumulate(t, a, [&](Array& ga) { ga += g; });
    detail::accumulate(t, b, [&](Array& gb) { gb += g; });
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    detail::accumulate(t, a, [&](Array& ga) { ga += g; });
    detail::accumulate(t, b, [&](Array& gb) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    const Array& av = t.value(a);
    const Array& bv2 = t.value(b);
    detail::accumulate(t, a, [&](Array& ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv2[i];
    });
    detail::accumulate(t, b, [&](Array& gb) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

inline Var scale(Var a, double c) {
  Array out = a.value();
  for (auto& x : out.storage()) x *= c;
  return a.tape->record("scale", std::move(out), {a}, [a, c](Tape& t, const Array& g) {
    detail::accumulate(t, a, [&](Array& ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
    });
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape->record("sum", Array::scalar(s), {a}, [a](Tape& t, const Array& g) {
    detail::accumulate(t, a, [&](Array& ga) {
      for (auto& x : ga.storage()) x += g[0];
    });
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

inline Var activation(Var x, Activation kind) {
  Array out = x.value();
  for (auto& v : out.storage()) v = detail::activate(kind, v);
  return x.tape->record("activation", std::move(out), {x}, [x, kind](Tape& t, const Array& g) {
    const Array& xv = t.value(x);
    detail::accumulate(t, x, [&](Array& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * detail::activate_derivative(kind, xv[i]);
    });
  });
}

// ---------------------------------------------------------------- structural

/// Flat window [offset, offset + numel(shape)) of `x`, reshaped.
inline Var slice(Var x, std::size_t offset, Shape shape) {
  const std::size_t n = numel(shape);
  if (offset + n > x.value().size()) {
    throw DimensionError("slice: window [" + std::to_string(offset) + ", " + std::to_string(offset + n) +
                         ") exceeds " + std::to_string(x.value().size()) + " elements");
  }
  const auto first = x.value().storage().begin() + static_cast<long>(offset);
  Array out(std::move(shape), std::vector<double>(first, first + static_cast<long>(n)));
  return x.tape->record("slice", std::move(out), {x}, [x, offset](Tape& t, const Array& g) {
    detail::accumulate(t, x, [&](Array& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  });
}

inline Var reshape(Var x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x}, [x](Tape& t, const Array& g) {
    detail::accumulate(t, x, [&](Array& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

/// Row `i` of the leading axis, keeping a leading extent of 1.
inline Var select(Var x, std::size_t i) {
  Shape s = x.shape();
  if (s.empty() || i >= s[0]) throw DimensionError("select: index out of range");
  const std::size_t stride = x.value().size() / s[0];
  s[0] = 1;
  return slice(x, i * stride, std::move(s));
}

/// Concatenate [B, Ca, S...] and [B, Cb, S...] along the channel axis.
inline Var concat_channels(Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw DimensionError("concat_channels: " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t batch = sa[0];
  const std::size_t block_a = a.value().size() / batch;
  const std::size_t block_b = b.value().size() / batch;
  Shape so = sa;
  so[1] = sa[1] + sb[1];
  Array out(so);
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(a.value().raw() + i * block_a, block_a, out.raw() + i * (block_a + block_b));
    std::copy_n(b.value().raw() + i * block_b, block_b, out.raw() + i * (block_a + block_b) + block_a);
  }
  return a.tape->record("concat_channels", std::move(out), {a, b},
                        [a, b, batch, block_a, block_b](Tape& t, const Array& g) {
                          detail::accumulate(t, a, [&](Array& ga) {
                            for (std::size_t i = 0; i < batch; ++i)
                              for (std::size_t k = 0; k < block_a; ++k)
                                ga[i * block_a + k] += g[i * (block_a + block_b) + k];
                          });
                          detail::accumulate(t, b, [&](Array& gb) {
                            for (std::size_t i = 0; i < batch; ++i)
                              for (std::size_t k = 0; k < block_b; ++k)
                                gb[i * block_b + k] += g[i * (block_a + block_b) + block_a + k];
                          });
                        });
}

// ---------------------------------------------------------------- affine maps

/// y = x W^T + b for x[batch, in], W[out, in], b[out].
inline Var linear(Var x, Var w, Var b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  const Shape& sb = b.shape();
  if (sx.size() != 2 || sw.size() != 2 || sb.size() != 1 || sx[1] != sw[1] || sb[0] != sw[0]) {
    throw DimensionError("linear: x" + to_string(sx) + " W" + to_string(sw) + " b" + to_string(sb));
  }
  const std::size_t m = sx[0];
  const std::size_t in = sx[1];
  const std::size_t out_dim = sw[0];
  Array out({m, out_dim});
  {
    auto y = detail::mat(out, m, out_dim);
    y.noalias() = detail::mat(x.value(), m, in) * detail::mat(w.value(), out_dim, in).transpose();
    const auto bias = detail::mat(b.value(), 1, out_dim);
    y.rowwise() += bias.row(0);
  }
  return x.tape->record("linear", std::move(out), {x, w, b}, [x, w, b, m, in, out_dim](Tape& t, const Array& g) {
    const auto gm = detail::mat(g, m, out_dim);
    detail::accumulate(t, x, [&](Array& gx) {
      detail::mat(gx, m, in).noalias() += gm * detail::mat(t.value(w), out_dim, in);
    });
    detail::accumulate(t, w, [&](Array& gw) {
      detail::mat(gw, out_dim, in).noalias() += gm.transpose() * detail::mat(t.value(x), m, in);
    });
    detail::accumulate(t, b, [&](Array& gb) { detail::mat(gb, 1, out_dim) += gm.colwise().sum(); });
  });
}

/// Pointwise channel map y[b,:,s] = W x[b,:,s] + bias for x[B, Cin, S...].
inline Var channel_affine(Var x, Var w, Var b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() < 2 || sw.size() != 2 || sw[1] != sx[1] || b.shape() != Shape{sw[0]}) {
    throw DimensionError("channel_affine: x" + to_string(sx) + " W" + to_string(sw) + " b" + to_string(b.shape()));
  }
  const std::size_t batch = sx[0];
  const std::size_t cin = sx[1];
  const std::size_t cout = sw[0];
  const std::size_t points = x.value().size() / (batch * cin);
  Shape so = sx;
  so[1] = cout;
  Array out(so);
  const auto wm = detail::mat(w.value(), cout, cin);
  const Eigen::Map<const Eigen::VectorXd> bias(b.value().raw(), static_cast<Eigen::Index>(cout));
  for (std::size_t i = 0; i < batch; ++i) {
    auto y = detail::mat(out, cout, points, i * cout * points);
    y.noalias() = wm * detail::mat(x.value(), cin, points, i * cin * points);
    y.colwise() += bias;
  }
  return x.tape->record("channel_affine", std::move(out), {x, w, b},
                        [x, w, b, batch, cin, cout, points](Tape& t, const Array& g) {
                          for (std::size_t i = 0; i < batch; ++i) {
                            const auto gi = detail::mat(g, cout, points, i * cout * points);
                            detail::accumulate(t, x, [&](Array& gx) {
                              detail::mat(gx, cin, points, i * cin * points).noalias() +=
                                  detail::mat(t.value(w), cout, cin).transpose() * gi;
                            });
                            detail::accumulate(t, w, [&](Array& gw) {
                              detail::mat(gw, cout, cin).noalias() +=
                                  gi * detail::mat(t.value(x), cin, points, i * cin * points).transpose();
                            });
                            detail::accumulate(t, b, [&](Array& gb) {
                              Eigen::Map<Eigen::VectorXd>(gb.raw(), static_cast<Eigen::Index>(cout)) +=
                                  gi.rowwise().sum();
                            });
                          }
                        });
}

// ---------------------------------------------------------------- complex / spectral

inline Var to_complex(Var x) {
  Shape s = x.shape();
  s.push_back(2);
  Array out(s);
  const Array& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[2 * i] = xv[i];
  return x.tape->record("to_complex", std::move(out), {x}, [x](Tape& t, const Array& g) {
    detail::accumulate(t, x, [&](Array& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[2 * i];
    });
  });
}

inline Var real_part(Var z) {
  if (!z.value().is_complex()) throw DimensionError("real_part: input is not complex");
  Shape s = z.shape();
  s.pop_back();
  Array out(s);
  const Array& zv = z.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = zv[2 * i];
  return z.tape->record("real_part", std::move(out), {z}, [z](Tape& t, const Array& g) {
    detail::accumulate(t, z, [&](Array& gz) {
      for (std::size_t i = 0; i < g.size(); ++i) gz[2 * i] += g[i];
    });
  });
}

namespace detail {

inline void transform_axes(Array& z, const std::vector<std::size_t>& axes, fft::Direction dir, bool normalize) {
  const Shape dims(z.shape().begin(), z.shape().end() - 1);
  for (std::size_t axis : axes) fft::transform_axis(z.as_complex(), dims, axis, dir, normalize);
}

inline void check_fft_axes(const Array& z, const std::vector<std::size_t>& axes, const char* op) {
  if (!z.is_complex()) throw DimensionError(std::string(op) + ": input is not complex");
  for (std::size_t a : axes) {
    if (a + 1 >= z.rank()) throw DimensionError(std::string(op) + ": axis out of range");
    fft::require_power_of_two(z.extent(a), op);
  }
}

}  // namespace detail

/// Unnormalized forward DFT along `axes`. The adjoint of F is n * F^{-1}.
inline Var fft_forward(Var z, std::vector<std::size_t> axes) {
  detail::check_fft_axes(z.value(), axes, "fft");
  Array out = z.value();
  detail::transform_axes(out, axes, fft::Direction::forward, true);
  return z.tape->record("fft", std::move(out), {z}, [z, axes](Tape& t, const Array& g) {
    detail::accumulate(t, z, [&](Array& gz) {
      Array back = g;
      detail::transform_axes(back, axes, fft::Direction::inverse, false);
      gz += back;
    });
  });
}

/// Inverse DFT along `axes` with 1/n normalization. Adjoint is F / n.
inline Var fft_inverse(Var z, std::vector<std::size_t> axes) {
  detail::check_fft_axes(z.value(), axes, "ifft");
  Array out = z.value();
  detail::transform_axes(out, axes, fft::Direction::inverse, true);
  double n = 1.0;
  for (std::size_t a : axes) n *= static_cast<double>(z.value().extent(a));
  return z.tape->record("ifft", std::move(out), {z}, [z, axes, n](Tape& t, const Array& g) {
    detail::accumulate(t, z, [&](Array& gz) {
      Array back = g;
      detail::transform_axes(back, axes, fft::Direction::forward, true);
      for (std::size_t i = 0; i < back.size(); ++i) gz[i] += back[i] / n;
    });
  });
}

/// Pick spectral entries at flat spatial indices `modes` from z[B, C, S..., 2],
/// producing [B, C, K, 2].
inline Var gather_modes(Var z, std::vector<std::size_t> modes) {
  const Shape& s = z.shape();
  if (!z.value().is_complex() || s.size() < 4) throw DimensionError("gather_modes: expected [B,C,S...,2]");
  const std::size_t lines = s[0] * s[1];
  const std::size_t points = numel(detail::spatial_dims(s, 2));
  const std::size_t k = modes.size();
  for (std::size_t m : modes)
    if (m >= points) throw DimensionError("gather_modes: mode index out of range");
  Array out({s[0], s[1], k, 2});
  const auto zin = z.value().as_complex();
  auto zout = out.as_complex();
  for (std::size_t l = 0; l < lines; ++l)
    for (std::size_t j = 0; j < k; ++j) zout[l * k + j] = zin[l * points + modes[j]];
  return z.tape->record("gather_modes", std::move(out), {z},
                        [z, modes = std::move(modes), lines, points, k](Tape& t, const Array& g) {
                          detail::accumulate(t, z, [&](Array& gz) {
                            auto gzc = gz.as_complex();
                            const auto gc = g.as_complex();
                            for (std::size_t l = 0; l < lines; ++l)
                              for (std::size_t j = 0; j < k; ++j) gzc[l * points + modes[j]] += gc[l * k + j];
                          });
                        });
}

/// Inverse of gather_modes: place z[B, C, K, 2] at flat indices `modes` of a
/// zero spectrum with spatial extents `spatial`, scaled per mode by `weights`.
inline Var scatter_modes(Var z, Shape spatial, std::vector<std::size_t> modes, std::vector<double> weights) {
  const Shape& s = z.shape();
  if (s.size() != 4 || s[3] != 2 || s[2] != modes.size() || weights.size() != modes.size()) {
    throw DimensionError("scatter_modes: expected [B,C,K,2] with K modes and weights");
  }
  const std::size_t lines = s[0] * s[1];
  const std::size_t points = numel(spatial);
  const std::size_t k = modes.size();
  Shape so{s[0], s[1]};
  so.insert(so.end(), spatial.begin(), spatial.end());
  so.push_back(2);
  Array out(so);
  const auto zin = z.value().as_complex();
  auto zout = out.as_complex();
  for (std::size_t l = 0; l < lines; ++l)
    for (std::size_t j = 0; j < k; ++j) {
      if (modes[j] >= points) throw DimensionError("scatter_modes: mode index out of range");
      zout[l * points + modes[j]] += weights[j] * zin[l * k + j];
    }
  return z.tape->record(
      "scatter_modes", std::move(out), {z},
      [z, modes = std::move(modes), weights = std::move(weights), lines, points, k](Tape& t, const Array& g) {
        detail::accumulate(t, z, [&](Array& gz) {
          auto gzc = gz.as_complex();
          const auto gc = g.as_complex();
          for (std::size_t l = 0; l < lines; ++l)
            for (std::size_t j = 0; j < k; ++j) gzc[l * k + j] += weights[j] * gc[l * points + modes[j]];
        });
      });
}

/// Per-mode complex channel mixing y[b,o,k] = sum_i x[b,i,k] R[k,i,o]
/// for x[B, Cin, K, 2] and R[K, Cin, Cout, 2].
inline Var complex_mix(Var x, Var r) {
  const Shape& sx = x.shape();
  const Shape& sr = r.shape();
  if (sx.size() != 4 || sx[3] != 2 || sr.size() != 4 || sr[3] != 2 || sr[0] != sx[2] || sr[1] != sx[1]) {
    throw DimensionError("complex_mix: x" + to_string(sx) + " R" + to_string(sr));
  }
  const std::size_t batch = sx[0];
  const std::size_t cin = sx[1];
  const std::size_t k = sx[2];
  const std::size_t cout = sr[2];
  Array out({batch, cout, k, 2});
  const auto xc = x.value().as_complex();
  const auto rc = r.value().as_complex();
  auto yc = out.as_complex();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < k; ++m)
      for (std::size_t i = 0; i < cin; ++i) {
        const Complex xv = xc[(b * cin + i) * k + m];
        const Complex* row = rc.data() + (m * cin + i) * cout;
        for (std::size_t o = 0; o < cout; ++o) yc[(b * cout + o) * k + m] += xv * row[o];
      }
  return x.tape->record("complex_mix", std::move(out), {x, r}, [x, r, batch, cin, k, cout](Tape& t, const Array& g) {
    const auto gc = g.as_complex();
    const auto xv = t.value(x).as_complex();
    const auto rv = t.value(r).as_complex();
    detail::accumulate(t, x, [&](Array& gx) {
      auto gxc = gx.as_complex();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t m = 0; m < k; ++m)
          for (std::size_t i = 0; i < cin; ++i) {
            Complex acc{};
            for (std::size_t o = 0; o < cout; ++o)
              acc += gc[(b * cout + o) * k + m] * std::conj(rv[(m * cin + i) * cout + o]);
            gxc[(b * cin + i) * k + m] += acc;
          }
    });
    detail::accumulate(t, r, [&](Array& gr) {
      auto grc = gr.as_complex();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t m = 0; m < k; ++m)
          for (std::size_t i = 0; i < cin; ++i) {
            const Complex xconj = std::conj(xv[(b * cin + i) * k + m]);
            for (std::size_t o = 0; o < cout; ++o)
              grc[(m * cin + i) * cout + o] += xconj * gc[(b * cout + o) * k + m];
          }
    });
  });
}

// ---------------------------------------------------------------- metrics

/// Per-row relative L2 error sqrt(sum (a-b)^2 / sum b^2) over the leading axis; output [B].
inline Var relative_l2_rows(Var a, Var b) {
  detail::require_same_shape(a.value(), b.value(), "relative_l2_rows");
  const Shape& s = a.shape();
  if (s.empty()) throw DimensionError("relative_l2_rows: rank-0 input");
  const std::size_t rows = s[0];
  const std::size_t cols = a.value().size() / rows;
  Array out({rows});
  std::vector<double> denom(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double bv = b.value()[r * cols + c];
      const double d = a.value()[r * cols + c] - bv;
      num += d * d;
      den += bv * bv;
    }
    if (den == 0.0) throw MetricError("Err: reference field is identically zero");
    out[r] = std::sqrt(num / den);
    denom[r] = den;
  }
  const Array err = out;
  return a.tape->record("relative_l2", std::move(out), {a, b},
                        [a, b, rows, cols, err, denom = std::move(denom)](Tape& t, const Array& g) {
                          const Array& av = t.value(a);
                          const Array& bv = t.value(b);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const double e = err[r];
                            const double s_b = denom[r];
                            // d e / d a = (a - b) / (e S); zero subgradient at a == b.
                            const double ka = e > 0.0 ? g[r] / (e * s_b) : 0.0;
                            const double kb = g[r] * e / s_b;
                            detail::accumulate(t, a, [&](Array& ga) {
                              for (std::size_t c = 0; c < cols; ++c)
                                ga[r * cols + c] += ka * (av[r * cols + c] - bv[r * cols + c]);
                            });
                            detail::accumulate(t, b, [&](Array& gb) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                gb[i] += -ka * (av[i] - bv[i]) - kb * bv[i];
                              }
                            });
                          }
                        });
}

/// Err over the whole array, shape [1].
inline Var relative_l2(Var a, Var b) {
  const std::size_t n = a.value().size();
  return relative_l2_rows(reshape(a, {1, n}), reshape(b, {1, n}));
}

}  // namespace opflow
