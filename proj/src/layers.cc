#include "mctt/layers.h"

namespace mctt {

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros({out})) {}

void Linear::collect(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

LayerNormParams::LayerNormParams(std::size_t dim)
    : gain(Tensor::full({dim}, 1.0)), bias(Tensor::zeros({dim})) {}

void LayerNormParams::collect(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".gain", gain);
  params.add(prefix + ".bias", bias);
}

}  // namespace mctt
