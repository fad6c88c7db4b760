#pragma once

#include <cmath>
#include <cstddef>

#include "metasci/backbone.hpp"

namespace metasci {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam first/second moment accumulators and step counter for one ParamSet.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const ParamSet<T>& like) : cfg_(cfg) {
    for (const auto& t : like) {
      m_.emplace_back(t.shape());
      v_.emplace_back(t.shape());
    }
  }

  /// params <- params - lr * mhat / (sqrt(vhat) + eps), bias-corrected.
  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw DimensionMismatch("Adam: parameter set does not match optimizer state");
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<T>& p = params[k];
      const Tensor<T>& g = grads[k];
      require_same_shape(p, g, "Adam");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        double m = cfg_.beta1 * static_cast<double>(m_[k][i]) + (1.0 - cfg_.beta1) * gi;
        double v = cfg_.beta2 * static_cast<double>(v_[k][i]) + (1.0 - cfg_.beta2) * gi * gi;
        m_[k][i] = static_cast<T>(m);
        v_[k][i] = static_cast<T>(v);
        const double update = cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
      }
    }
  }

  std::size_t steps() const noexcept { return steps_; }
  const ParamSet<T>& first_moment() const noexcept { return m_; }
  const ParamSet<T>& second_moment() const noexcept { return v_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  ParamSet<T> m_, v_;
  std::size_t steps_ = 0;
};

/// y += a * x, tensor by tensor.
template <class T>
void axpy(ParamSet<T>& y, double a, const ParamSet<T>& x) {
  if (y.size() != x.size()) throw DimensionMismatch("axpy: parameter sets differ");
  for (std::size_t k = 0; k < y.size(); ++k) {
    require_same_shape(y[k], x[k], "axpy");
    for (std::size_t i = 0; i < y[k].size(); ++i) y[k][i] += static_cast<T>(a) * x[k][i];
  }
}

template <class T>
double l2_norm(const ParamSet<T>& p) {
  double s = 0.0;
  for (const auto& t : p)
    for (const T& v : t.storage()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

template <class T>
bool all_finite(const ParamSet<T>& p) {
  for (const auto& t : p) {
    if (!all_finite(t)) return false;
  }
  return true;
}

}  // namespace metasci
