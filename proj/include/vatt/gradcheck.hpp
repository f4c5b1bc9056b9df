#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vatt/tensor.hpp"

namespace vatt {

// A view into one named parameter tensor and its analytic gradient.
struct ParamRef {
  std::string name;
  double* w = nullptr;
  const double* g = nullptr;
  std::size_t n = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences (f(t+h) - f(t-h)) / 2h against the analytic
// gradient captured at entry. Relative error uses max(|a|, |n|, 1e-8) as the
// denominator. `loss` must be a deterministic function of the parameters.
inline GradCheckResult grad_check(const std::function<double()>& loss,
                                  std::span<const ParamRef> params,
                                  double h = 1e-5) {
  std::vector<Vec> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.g, p.g + p.n);

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& p = params[pi];
    for (std::size_t i = 0; i < p.n; ++i) {
      double saved = p.w[i];
      p.w[i] = saved + h;
      double fp = loss();
      p.w[i] = saved - h;
      double fm = loss();
      p.w[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p.name;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace vatt
