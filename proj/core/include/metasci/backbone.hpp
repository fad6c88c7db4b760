#pragma once

// Fully convolutional reconstruction backbone with rank-one kernel modulation.
//
// Topology (c = width_scale):
//   head  5x5 (B+1)->32c, 3x3 32c->64c, 1x1 64c->64c, 3x3/2 64c->128c
//   res_blocks x [3x3, 1x1, 3x3, 3x3, +skip, 3x3, 1x1], all 128c->128c
//   tail  transposed 3x3/2 128c->64c, 3x3 64c->32c, 1x1 32c->16c, 3x3 16c->B
// Every layer but the last is followed by a leaky ReLU. Each conv kernel W is
// replaced by W . (alpha^T beta) at evaluation time; biases are not modulated.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metasci/autodiff.hpp"
#include "metasci/tensor.hpp"

namespace metasci {

struct ArchConfig {
  std::size_t frames = 8;
  double width_scale = 1.0;
  std::size_t res_blocks = 3;
  double leaky_slope = 0.2;

  /// Throws InvalidArgument unless every scaled channel count is a positive integer.
  void validate() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class LayerKind { kConv, kTransposedConv };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::size_t kernel = 3;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  bool activation = true;
  bool saves_skip = false;  // residual source is this layer's input
  bool adds_skip = false;   // residual summation follows this layer
};

/// Round(base * scale); throws unless the product is a positive integer.
std::size_t scaled_channels(std::size_t base, double scale);

/// Ordered layer list; size is 8 + 6 * res_blocks.
std::vector<LayerSpec> layer_specs(const ArchConfig& arch);

struct ModulationCounts {
  std::size_t rank1 = 0;  // sum_l (Cin + Cout)
  std::size_t full = 0;   // sum_l Cin * Cout
};

ModulationCounts count_modulation_params(const ArchConfig& arch);

/// Flat list of parameter tensors; the unit the optimizers work on.
template <class T>
using ParamSet = std::vector<Tensor<T>>;

template <class T>
std::size_t parameter_count(const ParamSet<T>& p) {
  std::size_t n = 0;
  for (const auto& t : p) n += t.size();
  return n;
}

template <class To, class From>
ParamSet<To> param_cast(const ParamSet<From>& p) {
  ParamSet<To> out;
  out.reserve(p.size());
  for (const auto& t : p) out.push_back(tensor_cast<To>(t));
  return out;
}

/// Shared backbone weights (Theta_1): tensors laid out [W_0, E_0, W_1, E_1, ...].
template <class T>
struct BaseParams {
  ArchConfig arch;
  ParamSet<T> tensors;

  std::size_t layers() const { return tensors.size() / 2; }
  Tensor<T>& kernel(std::size_t l) { return tensors[2 * l]; }
  const Tensor<T>& kernel(std::size_t l) const { return tensors[2 * l]; }
  Tensor<T>& bias(std::size_t l) { return tensors[2 * l + 1]; }
  const Tensor<T>& bias(std::size_t l) const { return tensors[2 * l + 1]; }
  std::size_t parameter_count() const { return metasci::parameter_count(tensors); }
  friend bool operator==(const BaseParams&, const BaseParams&) = default;
};

/// Per-layer rank-one factors: tensors laid out [alpha_0, beta_0, alpha_1, ...].
template <class T>
struct Modulation {
  ParamSet<T> tensors;

  std::size_t layers() const { return tensors.size() / 2; }
  Tensor<T>& alpha(std::size_t l) { return tensors[2 * l]; }
  const Tensor<T>& alpha(std::size_t l) const { return tensors[2 * l]; }
  Tensor<T>& beta(std::size_t l) { return tensors[2 * l + 1]; }
  const Tensor<T>& beta(std::size_t l) const { return tensors[2 * l + 1]; }
  std::size_t parameter_count() const { return metasci::parameter_count(tensors); }

  /// All-ones factors: W . Gamma = W.
  static Modulation identity(const ArchConfig& arch) {
    Modulation m;
    for (const LayerSpec& s : layer_specs(arch)) {
      m.tensors.emplace_back(Shape{s.in_channels}, T(1));
      m.tensors.emplace_back(Shape{s.out_channels}, T(1));
    }
    return m;
  }
  friend bool operator==(const Modulation&, const Modulation&) = default;
};

/// Meta-modulation parameters Theta_2.
template <class T>
using MetaModulation = Modulation<T>;

/// A modulation evolved for one task (mask set).
template <class T>
struct TaskModulation {
  std::string task;
  std::uint64_t mask_seed = 0;
  std::uint64_t mask_hash = 0;
  Modulation<T> params;
};

/// Kernels ~ N(0, 2 / (kx*ky*Cin)), biases 0, modulation all ones.
template <class T>
std::pair<BaseParams<T>, Modulation<T>> init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  BaseParams<T> base{arch, {}};
  std::mt19937_64 rng(seed);
  for (const LayerSpec& s : layer_specs(arch)) {
    const double std = std::sqrt(2.0 / static_cast<double>(s.kernel * s.kernel * s.in_channels));
    std::normal_distribution<double> dist(0.0, std);
    Tensor<T> w({s.kernel, s.kernel, s.in_channels, s.out_channels});
    for (auto& v : w.storage()) v = static_cast<T>(dist(rng));
    base.tensors.push_back(std::move(w));
    base.tensors.emplace_back(Shape{s.out_channels});
  }
  return {std::move(base), Modulation<T>::identity(arch)};
}

/// out[u,v,c,o] = W[u,v,c,o] * alpha[c] * beta[o].
template <class T>
Tensor<T> modulated_kernel(const Tensor<T>& w, const Tensor<T>& alpha, const Tensor<T>& beta) {
  if (w.rank() != 4 || alpha.size() != w.dim(2) || beta.size() != w.dim(3)) {
    throw DimensionMismatch("modulated_kernel: kernel " + shape_string(w.shape()) + ", alpha " +
                            shape_string(alpha.shape()) + ", beta " + shape_string(beta.shape()));
  }
  const std::size_t kk = w.dim(0) * w.dim(1), ci = w.dim(2), co = w.dim(3);
  Tensor<T> out(w.shape());
  for (std::size_t uv = 0; uv < kk; ++uv)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t o = 0; o < co; ++o) {
        const std::size_t i = (uv * ci + c) * co + o;
        out[i] = w[i] * alpha[c] * beta[o];
      }
  return out;
}

/// Backbone parameters placed on a tape. `alphas`/`betas` empty = unmodulated.
template <class T>
struct BackboneVars {
  std::vector<ad::Var<T>> kernels;
  std::vector<ad::Var<T>> biases;
  std::vector<ad::Var<T>> alphas;
  std::vector<ad::Var<T>> betas;
};

/// Places parameters on the tape as variables (gradients wanted) or constants.
/// `base` is laid out like BaseParams::tensors, `mod` like Modulation::tensors.
template <class T>
BackboneVars<T> place_on_tape(ad::Tape<T>& tape, const ParamSet<T>& base, const ParamSet<T>* mod,
                              bool base_requires_grad, bool mod_requires_grad) {
  BackboneVars<T> v;
  for (std::size_t l = 0; l < base.size() / 2; ++l) {
    v.kernels.push_back(base_requires_grad ? tape.variable(base[2 * l]) : tape.constant(base[2 * l]));
    v.biases.push_back(base_requires_grad ? tape.variable(base[2 * l + 1]) : tape.constant(base[2 * l + 1]));
  }
  if (mod) {
    if (mod->size() != base.size()) throw DimensionMismatch("modulation has wrong layer count");
    for (std::size_t l = 0; l < mod->size() / 2; ++l) {
      v.alphas.push_back(mod_requires_grad ? tape.variable((*mod)[2 * l]) : tape.constant((*mod)[2 * l]));
      v.betas.push_back(mod_requires_grad ? tape.variable((*mod)[2 * l + 1]) : tape.constant((*mod)[2 * l + 1]));
    }
  }
  return v;
}

template <class T>
BackboneVars<T> place_on_tape(ad::Tape<T>& tape, const BaseParams<T>& base, const Modulation<T>* mod,
                              bool base_requires_grad, bool mod_requires_grad) {
  return place_on_tape(tape, base.tensors, mod ? &mod->tensors : nullptr, base_requires_grad,
                       mod_requires_grad);
}

/// Tape-level forward pass over an HWC or NHWC fused input; output has B channels
/// and no output activation.
template <class T>
ad::Var<T> forward(const ArchConfig& arch, const ad::Var<T>& input, const BackboneVars<T>& params) {
  const std::vector<LayerSpec> specs = layer_specs(arch);
  if (params.kernels.size() != specs.size() || params.biases.size() != specs.size()) {
    throw DimensionMismatch("backbone: expected " + std::to_string(specs.size()) + " layers");
  }
  const bool modulated = !params.alphas.empty();
  std::size_t n, h, w, c;
  kernels::split_feature_shape(input.shape(), n, h, w, c);
  if (c != arch.frames + 1) {
    throw DimensionMismatch("backbone: input has " + std::to_string(c) + " channels, expected " +
                            std::to_string(arch.frames + 1));
  }
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionMismatch("backbone: spatial dims must be even, got " + shape_string(input.shape()));
  }
  ad::Var<T> x = input;
  ad::Var<T> skip;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& s = specs[l];
    if (s.saves_skip) skip = x;
    ad::Var<T> k = params.kernels[l];
    if (modulated) k = ad::modulate_kernel(k, params.alphas[l], params.betas[l]);
    x = s.kind == LayerKind::kConv ? ad::conv2d(x, k, params.biases[l], s.stride)
                                   : ad::conv2d_transposed(x, k, params.biases[l], s.stride);
    if (s.activation) x = ad::leaky_relu(x, arch.leaky_slope);
    if (s.adds_skip) x = ad::residual_add(x, skip);
  }
  return x;
}

/// Evaluates the backbone without keeping gradients. `mod == nullptr` runs unmodulated.
template <class T>
Tensor<T> forward(const Tensor<T>& input, const BaseParams<T>& base, const Modulation<T>* mod) {
  ad::Tape<T> tape;
  const BackboneVars<T> vars = place_on_tape(tape, base, mod, false, false);
  const ad::Var<T> x = tape.constant(input);
  return forward(base.arch, x, vars).value();
}

}  // namespace metasci
