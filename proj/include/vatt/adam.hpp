#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "vatt/tensor.hpp"

namespace vatt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam state for one parameter tensor. Moments have the same
// flat size as the parameters; step increases by exactly 1 per update.
struct AdamState {
  std::size_t step = 0;
  Vec m, v;
  AdamConfig cfg;

  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig c = {}) : m(n, 0.0), v(n, 0.0), cfg(c) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    fail("adam_step: shape mismatch");
  st.step += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    params[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
  }
}

}  // namespace vatt
