#pragma once

#include <random>
#include <string>

#include "mctt/tensor.h"

namespace mctt {

// y = x W + b with W of shape (in, out).
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  void collect(ParameterSet& params, const std::string& prefix) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(ParameterSet& params, const std::string& prefix) const;
};

}  // namespace mctt
