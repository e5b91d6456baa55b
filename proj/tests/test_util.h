#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mctt/tensor.h"

namespace mctt::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of loss() w.r.t. every element of every
// leaf against central differences. stride > 1 samples every stride-th
// element to keep large checks affordable.
inline GradCheck check_gradients(const std::vector<Tensor>& leaves,
                                 const std::function<Tensor()>& loss,
                                 double h = 1e-5, std::size_t stride = 1,
                                 double floor = 1e-5) {
  for (auto leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);
    }
  }
  GradCheck result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor leaf = leaves[k];
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace mctt::testing
