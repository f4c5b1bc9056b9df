#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "vatt/tensor.hpp"

namespace vatt {

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) fail("log_sum_exp: empty input");
  double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Max-subtracted softmax; outputs sum to 1 within 1e-12 for finite inputs.
inline Vec softmax(std::span<const double> v) {
  if (v.empty()) fail("softmax: empty input");
  check_finite(v, "softmax");
  double mx = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without cancellation for large |x|
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Categorical cross-entropy, fused with log-softmax: -log softmax(logits)[target].
inline double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) fail("cross_entropy: target index out of range");
  return log_sum_exp(logits) - logits[target];
}

// Binary cross-entropy on a logit, fused with log-sigmoid. target in {0,1}.
inline double cross_entropy(double logit, int target) {
  if (target != 0 && target != 1) fail("cross_entropy: binary target must be 0 or 1");
  return target ? -log_sigmoid(logit) : -log_sigmoid(-logit);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail("cosine: length mismatch");
  double nu = nrm2(u), nv = nrm2(v);
  if (nu == 0.0 || nv == 0.0) fail("cosine: zero-norm vector");
  return dot(u, v) / (nu * nv);
}

}  // namespace vatt
