#include "mctt/adam.h"

#include <cmath>

#include "mctt/errors.h"

namespace mctt {

Adam::Adam(ParameterSet params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_.items()) {
    state_.m.emplace_back(p.tensor.numel(), 0.0);
    state_.v.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_.items()) {
    if (!p.tensor.has_grad()) {
      throw StateError("adam: parameter '" + p.name + "' has no gradient");
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor w = params_.items()[k].tensor;
    auto g = w.grad();
    auto values = w.mutable_values();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::restore(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw StateError("adam: state holds " + std::to_string(state.m.size()) +
                     " moments for " + std::to_string(params_.size()) +
                     " parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto n = params_.items()[k].tensor.numel();
    if (state.m[k].size() != n || state.v[k].size() != n) {
      throw StateError("adam: moment size mismatch for '" +
                       params_.items()[k].name + "'");
    }
  }
  state_ = std::move(state);
}

}  // namespace mctt
