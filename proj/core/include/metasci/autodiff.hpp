#pragma once

// Reverse-mode automatic differentiation over dense tensors, restricted to the
// layer vocabulary of the reconstruction backbone.
//
// A Tape records one forward evaluation. Nodes are appended in evaluation
// order, so reverse insertion order is a valid topological order for the
// backward sweep; each node's backward closure runs at most once and
// accumulates into its parents' gradient buffers.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metasci/conv_kernels.hpp"
#include "metasci/tensor.hpp"

namespace metasci::ad {

template <class T>
class Tape;

/// Handle to a node on a Tape.
template <class T>
class Var {
 public:
  Var() = default;

  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Accumulator type for reductions: float sums are carried in double.
template <class T>
struct accumulator {
  using type = double;
};
template <class T>
struct accumulator<Dual<T>> {
  using type = Dual<double>;
};
template <class T>
using accumulator_t = typename accumulator<T>::type;

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that gradients can be requested for.
  Var<T> variable(Tensor<T> value) { return push(std::move(value), true, {}, nullptr, "variable"); }

  /// Leaf treated as a constant; nothing is propagated into it.
  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr, "constant"); }

  const Tensor<T>& value(const Var<T>& v) const { return nodes_.at(v.id()).value; }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Records an op result. The node requires grad iff any parent does; `backward`
  /// is only ever invoked in that case.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, Backward backward,
                const char* op) {
    bool req = false;
    for (std::size_t p : parents) req = req || nodes_.at(p).requires_grad;
    return push(std::move(value), req, std::move(parents), std::move(backward), op);
  }

  /// Gradient buffer of a node, allocated (zeroed) on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  const Tensor<T>& grad(std::size_t id) const { return nodes_.at(id).grad; }

  /// d loss / d param for each requested param; unreachable params get zeros.
  std::vector<Tensor<T>> gradients(const Var<T>& loss, std::span<const Var<T>> params) {
    check_owned(loss);
    if (value(loss).size() != 1) {
      throw InvalidArgument("gradients: loss must be scalar, got shape " +
                            shape_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor<T>();
    grad_buffer(loss.id())[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
      if (!all_finite(n.grad)) {
        throw NumericFailure(std::string("non-finite gradient at ") + n.op);
      }
    }
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (const Var<T>& p : params) {
      check_owned(p);
      const Node& n = nodes_[p.id()];
      out.push_back(n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad);
    }
    return out;
  }

  void check_owned(const Var<T>& v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
      throw InvalidArgument("variable does not belong to this tape");
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    Backward backward;
    const char* op = "";
  };

  Var<T> push(Tensor<T> value, bool req, std::vector<std::size_t> parents, Backward backward,
              const char* op) {
    if (!all_finite(value)) throw NumericFailure(std::string("non-finite values produced by ") + op);
    nodes_.push_back(Node{std::move(value), Tensor<T>(), req, std::move(parents), std::move(backward), op});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

namespace detail {

template <class T>
Tape<T>& same_tape(std::initializer_list<const Var<T>*> vars) {
  Tape<T>* t = (*vars.begin())->tape();
  for (const Var<T>* v : vars) {
    if (!v->valid() || v->tape() != t) throw InvalidArgument("variables from different tapes");
  }
  return *t;
}

template <class T>
void accumulate(Tape<T>& tape, std::size_t id, const Tensor<T>& g) {
  Tensor<T>& buf = tape.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

/// Same-padded 2-D convolution, stride 1 or 2; output spatial size ceil(I/s).
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride) {
  Tape<T>& tape = detail::same_tape<T>({&input, &kernel, &bias});
  Tensor<T> out = kernels::conv2d(input.value(), kernel.value(), bias.value(), stride);
  const std::size_t gi = input.id(), gk = kernel.id(), gb = bias.id();
  return tape.record(std::move(out), {gi, gk, gb},
                     [gi, gk, gb, stride](Tape<T>& t, std::size_t self) {
                       const bool ri = t.requires_grad(gi), rk = t.requires_grad(gk), rb = t.requires_grad(gb);
                       kernels::conv2d_backward(t.value(gi), t.value(gk), stride, t.grad(self),
                                                ri ? &t.grad_buffer(gi) : nullptr,
                                                rk ? &t.grad_buffer(gk) : nullptr,
                                                rb ? &t.grad_buffer(gb) : nullptr);
                     },
                     "conv2d");
}

/// Adjoint of the stride-`stride` conv with the same kernel geometry, plus bias.
template <class T>
Var<T> conv2d_transposed(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
                         std::size_t stride) {
  Tape<T>& tape = detail::same_tape<T>({&input, &kernel, &bias});
  Tensor<T> out = kernels::conv2d_transposed(input.value(), kernel.value(), bias.value(), stride);
  const std::size_t gi = input.id(), gk = kernel.id(), gb = bias.id();
  return tape.record(std::move(out), {gi, gk, gb},
                     [gi, gk, gb, stride](Tape<T>& t, std::size_t self) {
                       const bool ri = t.requires_grad(gi), rk = t.requires_grad(gk), rb = t.requires_grad(gb);
                       kernels::conv2d_transposed_backward(t.value(gi), t.value(gk), stride, t.grad(self),
                                                           ri ? &t.grad_buffer(gi) : nullptr,
                                                           rk ? &t.grad_buffer(gk) : nullptr,
                                                           rb ? &t.grad_buffer(gb) : nullptr);
                     },
                     "conv2d_transposed");
}

/// y = x for x >= 0, slope * x otherwise. The derivative at exactly 0 is `slope`.
template <class T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  Tape<T>& tape = *x.tape();
  const Tensor<T>& xv = x.value();
  const T a = T(static_cast<real_of_t<T>>(slope));
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : a * xv[i];
  const std::size_t xi = x.id();
  return tape.record(std::move(out), {xi},
                     [xi, a](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& xv = t.value(xi);
                       const Tensor<T>& g = t.grad(self);
                       Tensor<T>& gx = t.grad_buffer(xi);
                       for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += xv[i] > T(0) ? g[i] : a * g[i];
                     },
                     "leaky_relu");
}

template <class T>
Var<T> residual_add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::same_tape<T>({&a, &b});
  require_same_shape(a.value(), b.value(), "residual_add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi},
                     [ai, bi](Tape<T>& t, std::size_t self) {
                       if (t.requires_grad(ai)) detail::accumulate(t, ai, t.grad(self));
                       if (t.requires_grad(bi)) detail::accumulate(t, bi, t.grad(self));
                     },
                     "residual_add");
}

/// Concatenates HWC/NHWC feature maps along the channel axis, in order.
template <class T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  Tape<T>& tape = *parts[0].tape();
  std::size_t n, h, w, c0;
  kernels::split_feature_shape(parts[0].shape(), n, h, w, c0);
  std::vector<std::size_t> channels, ids;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    if (p.tape() != &tape) throw InvalidArgument("variables from different tapes");
    std::size_t pn, ph, pw, pc;
    kernels::split_feature_shape(p.shape(), pn, ph, pw, pc);
    if (pn != n || ph != h || pw != w || p.shape().size() != parts[0].shape().size()) {
      throw DimensionMismatch("concat_channels: spatial mismatch " + shape_string(p.shape()) +
                              " vs " + shape_string(parts[0].shape()));
    }
    channels.push_back(pc);
    ids.push_back(p.id());
    total += pc;
  }
  const std::size_t pixels = n * h * w;
  Tensor<T> out(kernels::feature_shape(parts[0].shape(), n, h, w, total));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    for (std::size_t p = 0; p < pixels; ++p)
      std::copy_n(v.data() + p * channels[k], channels[k], out.data() + p * total + offset);
    offset += channels[k];
  }
  return tape.record(std::move(out), ids,
                     [ids, channels, total, pixels](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.grad(self);
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (t.requires_grad(ids[k])) {
                           Tensor<T>& gk = t.grad_buffer(ids[k]);
                           for (std::size_t p = 0; p < pixels; ++p)
                             for (std::size_t c = 0; c < channels[k]; ++c)
                               gk[p * channels[k] + c] += g[p * total + offset + c];
                         }
                         offset += channels[k];
                       }
                     },
                     "concat_channels");
}

template <class T>
Var<T> concat_channels(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_channels<T>(std::span<const Var<T>>(v));
}

/// Mean of squared elementwise differences; a scalar node.
template <class T>
Var<T> mse_loss(const Var<T>& prediction, const Var<T>& target) {
  Tape<T>& tape = detail::same_tape<T>({&prediction, &target});
  require_same_shape(prediction.value(), target.value(), "mse_loss");
  const Tensor<T>& a = prediction.value();
  const Tensor<T>& b = target.value();
  using Acc = accumulator_t<T>;
  Acc sum{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Acc d = Acc(a[i]) - Acc(b[i]);
    sum += d * d;
  }
  const std::size_t count = a.size();
  Tensor<T> out({1});
  if constexpr (is_dual_v<T>) {
    using R = real_of_t<T>;
    out[0] = T(static_cast<R>(sum.value / double(count)), static_cast<R>(sum.tangent / double(count)));
  } else {
    out[0] = static_cast<T>(sum / static_cast<double>(count));
  }
  const std::size_t pi = prediction.id(), ti = target.id();
  return tape.record(std::move(out), {pi, ti},
                     [pi, ti, count](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& a = t.value(pi);
                       const Tensor<T>& b = t.value(ti);
                       const T scale = t.grad(self)[0] * T(real_of_t<T>(2.0 / double(count)));
                       if (t.requires_grad(pi)) {
                         Tensor<T>& g = t.grad_buffer(pi);
                         for (std::size_t i = 0; i < a.size(); ++i) g[i] += scale * (a[i] - b[i]);
                       }
                       if (t.requires_grad(ti)) {
                         Tensor<T>& g = t.grad_buffer(ti);
                         for (std::size_t i = 0; i < a.size(); ++i) g[i] -= scale * (a[i] - b[i]);
                       }
                     },
                     "mse_loss");
}

/// Sum over samples and frames of the unsquared Frobenius norm of each frame's
/// residual. Frames are the channel axis of an HWC/NHWC tensor.
template <class T>
Var<T> frame_l2_loss(const Var<T>& prediction, const Var<T>& target) {
  Tape<T>& tape = detail::same_tape<T>({&prediction, &target});
  require_same_shape(prediction.value(), target.value(), "frame_l2_loss");
  std::size_t n, h, w, c;
  kernels::split_feature_shape(prediction.shape(), n, h, w, c);
  const Tensor<T>& a = prediction.value();
  const Tensor<T>& b = target.value();
  using Acc = accumulator_t<T>;
  std::vector<Acc> sq(n * c, Acc{});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (s * h * w + p) * c + k;
        const Acc d = Acc(a[i]) - Acc(b[i]);
        sq[s * c + k] += d * d;
      }
  std::vector<T> norms(n * c);
  Acc sum{};
  T total{};
  for (std::size_t f = 0; f < sq.size(); ++f) {
    if constexpr (is_dual_v<T>) {
      using R = real_of_t<T>;
      const double r = std::sqrt(sq[f].value);
      const Acc v(r, r > 0 ? sq[f].tangent / (2 * r) : 0.0);
      norms[f] = T(static_cast<R>(v.value), static_cast<R>(v.tangent));
      sum += v;
      total = T(static_cast<R>(sum.value), static_cast<R>(sum.tangent));
    } else {
      const double r = std::sqrt(sq[f]);
      norms[f] = static_cast<T>(r);
      sum += r;
      total = static_cast<T>(sum);
    }
  }
  Tensor<T> out({1}, {total});
  const std::size_t pi = prediction.id(), ti = target.id();
  const std::size_t hw = h * w;
  return tape.record(std::move(out), {pi, ti},
                     [pi, ti, norms, hw, c, n](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& a = t.value(pi);
                       const Tensor<T>& b = t.value(ti);
                       const T g = t.grad(self)[0];
                       Tensor<T>* ga = t.requires_grad(pi) ? &t.grad_buffer(pi) : nullptr;
                       Tensor<T>* gb = t.requires_grad(ti) ? &t.grad_buffer(ti) : nullptr;
                       for (std::size_t s = 0; s < n; ++s)
                         for (std::size_t k = 0; k < c; ++k) {
                           const T norm = norms[s * c + k];
                           if (!(norm > T(0))) continue;
                           const T scale = g / norm;
                           for (std::size_t p = 0; p < hw; ++p) {
                             const std::size_t i = (s * hw + p) * c + k;
                             const T d = scale * (a[i] - b[i]);
                             if (ga) (*ga)[i] += d;
                             if (gb) (*gb)[i] -= d;
                           }
                         }
                     },
                     "frame_l2_loss");
}

/// Rank-one kernel modulation: out[u,v,c,o] = W[u,v,c,o] * alpha[c] * beta[o].
template <class T>
Var<T> modulate_kernel(const Var<T>& kernel, const Var<T>& alpha, const Var<T>& beta) {
  Tape<T>& tape = detail::same_tape<T>({&kernel, &alpha, &beta});
  const Tensor<T>& w = kernel.value();
  if (w.rank() != 4 || alpha.value().size() != w.dim(2) || beta.value().size() != w.dim(3)) {
    throw DimensionMismatch("modulate_kernel: kernel " + shape_string(w.shape()) + ", alpha " +
                            shape_string(alpha.shape()) + ", beta " + shape_string(beta.shape()));
  }
  const std::size_t kk = w.dim(0) * w.dim(1), ci = w.dim(2), co = w.dim(3);
  const Tensor<T>& av = alpha.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> out(w.shape());
  for (std::size_t uv = 0; uv < kk; ++uv)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t o = 0; o < co; ++o) {
        const std::size_t i = (uv * ci + c) * co + o;
        out[i] = w[i] * av[c] * bv[o];
      }
  const std::size_t wi = kernel.id(), ai = alpha.id(), bi = beta.id();
  return tape.record(std::move(out), {wi, ai, bi},
                     [wi, ai, bi, kk, ci, co](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& w = t.value(wi);
                       const Tensor<T>& a = t.value(ai);
                       const Tensor<T>& b = t.value(bi);
                       const Tensor<T>& g = t.grad(self);
                       Tensor<T>* gw = t.requires_grad(wi) ? &t.grad_buffer(wi) : nullptr;
                       Tensor<T>* ga = t.requires_grad(ai) ? &t.grad_buffer(ai) : nullptr;
                       Tensor<T>* gb = t.requires_grad(bi) ? &t.grad_buffer(bi) : nullptr;
                       for (std::size_t uv = 0; uv < kk; ++uv)
                         for (std::size_t c = 0; c < ci; ++c)
                           for (std::size_t o = 0; o < co; ++o) {
                             const std::size_t i = (uv * ci + c) * co + o;
                             if (gw) (*gw)[i] += g[i] * a[c] * b[o];
                             if (ga) (*ga)[c] += g[i] * w[i] * b[o];
                             if (gb) (*gb)[o] += g[i] * w[i] * a[c];
                           }
                     },
                     "modulate_kernel");
}

template <class T>
Var<T> sum(const Var<T>& x) {
  Tape<T>& tape = *x.tape();
  using Acc = accumulator_t<T>;
  Acc s{};
  for (const T& v : x.value().storage()) s += Acc(v);
  Tensor<T> out({1});
  if constexpr (is_dual_v<T>) {
    using R = real_of_t<T>;
    out[0] = T(static_cast<R>(s.value), static_cast<R>(s.tangent));
  } else {
    out[0] = static_cast<T>(s);
  }
  const std::size_t xi = x.id();
  return tape.record(std::move(out), {xi},
                     [xi](Tape<T>& t, std::size_t self) {
                       Tensor<T>& g = t.grad_buffer(xi);
                       const T up = t.grad(self)[0];
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
                     },
                     "sum");
}

/// Inner product <a, b>; a scalar node.
template <class T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::same_tape<T>({&a, &b});
  require_same_shape(a.value(), b.value(), "dot");
  using Acc = accumulator_t<T>;
  Acc s{};
  for (std::size_t i = 0; i < a.value().size(); ++i) s += Acc(a.value()[i]) * Acc(b.value()[i]);
  Tensor<T> out({1});
  if constexpr (is_dual_v<T>) {
    using R = real_of_t<T>;
    out[0] = T(static_cast<R>(s.value), static_cast<R>(s.tangent));
  } else {
    out[0] = static_cast<T>(s);
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(out), {ai, bi},
                     [ai, bi](Tape<T>& t, std::size_t self) {
                       const T up = t.grad(self)[0];
                       if (t.requires_grad(ai)) {
                         Tensor<T>& g = t.grad_buffer(ai);
                         const Tensor<T>& bv = t.value(bi);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * bv[i];
                       }
                       if (t.requires_grad(bi)) {
                         Tensor<T>& g = t.grad_buffer(bi);
                         const Tensor<T>& av = t.value(ai);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * av[i];
                       }
                     },
                     "dot");
}

/// Builds a scalar graph from a fresh variable; used by finite_difference_check.
template <class T>
using ScalarGraph = std::function<Var<T>(Tape<T>&, const Var<T>&)>;

/// Tape gradient against central differences (f(x+eps) - f(x-eps)) / 2eps.
struct FdError {
  /// max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8)
  double coordinate = 0.0;
  /// ||analytic - central|| / max(||analytic||, ||central||, 1e-8), Euclidean norms
  double normwise = 0.0;
};

template <class T>
FdError finite_difference_error(const ScalarGraph<T>& f, const Tensor<T>& point, double eps) {
  static_assert(!is_dual_v<T>, "finite differences operate on real tensors");
  Tensor<T> analytic;
  {
    Tape<T> tape;
    const Var<T> x = tape.variable(point);
    const Var<T> y = f(tape, x);
    const std::vector<Var<T>> params{x};
    analytic = tape.gradients(y, params).front();
  }
  auto eval = [&](const Tensor<T>& p) {
    Tape<T> tape;
    const Var<T> x = tape.constant(p);
    return static_cast<double>(f(tape, x).value()[0]);
  };
  FdError err;
  double diff2 = 0.0, a2 = 0.0, c2 = 0.0;
  Tensor<T> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const T orig = point[i];
    probe[i] = orig + static_cast<T>(eps);
    const double up = eval(probe);
    probe[i] = orig - static_cast<T>(eps);
    const double down = eval(probe);
    probe[i] = orig;
    // the actual step taken in T may differ from eps after rounding
    const double h = static_cast<double>(static_cast<T>(orig + static_cast<T>(eps))) -
                     static_cast<double>(static_cast<T>(orig - static_cast<T>(eps)));
    const double central = (up - down) / h;
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
    err.coordinate = std::max(err.coordinate, std::abs(a - central) / denom);
    diff2 += (a - central) * (a - central);
    a2 += a * a;
    c2 += central * central;
  }
  err.normwise = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(c2), 1e-8});
  return err;
}

/// Worst per-coordinate relative error; see FdError.
template <class T>
double finite_difference_check(const ScalarGraph<T>& f, const Tensor<T>& point, double eps) {
  return finite_difference_error(f, point, eps).coordinate;
}

}  // namespace metasci::ad
