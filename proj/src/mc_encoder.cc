#include "mctt/mc_encoder.h"

#include "mctt/errors.h"

namespace mctt {

Combiner parse_combiner(std::string_view text) {
  if (text == "avg" || text == "Avg") return Combiner::kAvg;
  if (text == "concat" || text == "Concat") return Combiner::kConcat;
  throw ConfigError("unknown combiner '" + std::string(text) + "' (expected avg or concat)");
}

std::string combiner_str(Combiner c) { return c == Combiner::kAvg ? "avg" : "concat"; }

void EncoderConfig::validate() const {
  mha.validate();
  if (feature_dim == 0) throw ConfigError("encoder: feature_dim must be positive");
  if (n_layers_csa == 0) throw ConfigError("encoder: need at least one CSA layer");
  if (mha.d_model % 2 != 0) throw ConfigError("encoder: d_model must be even");
}

Tensor combine(const ChannelEncodings& encs, std::size_t i, Combiner combiner,
               AvgDivisor divisor) {
  const std::size_t channels = encs.size();
  if (channels < 2) {
    throw CombinerError("combiner needs at least two channels, got " +
                        std::to_string(channels));
  }
  if (i >= channels) {
    throw CombinerError("combiner: channel " + std::to_string(i) + " of " +
                        std::to_string(channels));
  }
  std::vector<Tensor> others;
  for (std::size_t j = 0; j < channels; ++j) {
    if (j == i) continue;
    if (encs[j].shape() != encs[i].shape()) {
      throw DimensionError("combiner: channel shapes " + shape_str(encs[i].shape()) +
                           " and " + shape_str(encs[j].shape()) + " differ");
    }
    others.push_back(encs[j]);
  }
  if (combiner == Combiner::kConcat) return concat_rows(others);
  Tensor sum = others[0];
  for (std::size_t k = 1; k < others.size(); ++k) sum = add(sum, others[k]);
  const double div = divisor == AvgDivisor::kChannels ? static_cast<double>(channels)
                                                       : static_cast<double>(channels - 1);
  return scale(sum, 1.0 / div);
}

Tensor fuse(const ChannelEncodings& encs) {
  if (encs.empty()) throw InputError("fuse: no channels");
  if (encs.size() == 1) return encs[0];
  return mean_axis(stack(encs), 0);
}

ContextMask cross_channel_mask(std::size_t frames, std::size_t channels,
                               Combiner combiner, ContextWindow window) {
  if (combiner == Combiner::kAvg || channels < 2) return build_mask(frames, frames, window);
  std::vector<std::size_t> qt(frames), kt;
  for (std::size_t t = 0; t < frames; ++t) qt[t] = t;
  for (std::size_t j = 0; j + 1 < channels; ++j)
    for (std::size_t t = 0; t < frames; ++t) kt.push_back(t);
  return build_mask(qt, kt, window);
}

MultiChannelEncoder::MultiChannelEncoder(const EncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  embed_ = Linear(cfg_.feature_dim, cfg_.mha.d_model, rng);
  for (std::size_t l = 0; l < cfg_.n_layers_csa; ++l) csa_.emplace_back(cfg_.mha, rng);
  for (std::size_t l = 0; l < cfg_.n_layers_cca; ++l) cca_.emplace_back(cfg_.mha, rng);
}

Tensor MultiChannelEncoder::embed_channel(const Tensor& feats, std::size_t offset) const {
  if (feats.rank() != 2 || feats.dim(1) != cfg_.feature_dim) {
    throw DimensionError("encoder: features " + shape_str(feats.shape()) +
                         " do not have width " + std::to_string(cfg_.feature_dim));
  }
  return add(embed_(feats), positional_encoding(feats.dim(0), cfg_.mha.d_model, offset));
}

Tensor MultiChannelEncoder::csa_layer(std::size_t layer, const Tensor& x,
                                      const ContextMask& mask) const {
  return csa_.at(layer).forward(x, x, mask);
}

ChannelEncodings MultiChannelEncoder::cca_layer(std::size_t layer,
                                                const ChannelEncodings& encs) const {
  const std::size_t frames = encs.at(0).dim(0);
  auto mask = cross_channel_mask(frames, encs.size(), cfg_.combiner, cfg_.context);
  ChannelEncodings out;
  out.reserve(encs.size());
  for (std::size_t i = 0; i < encs.size(); ++i) {
    Tensor source = combine(encs, i, cfg_.combiner, cfg_.avg_divisor);
    out.push_back(cca_.at(layer).forward(encs[i], source, mask));
  }
  return out;
}

Tensor channel_tensor(const MultiChannelFeatures& feats, std::size_t c) {
  auto span = feats.channel(c);
  return Tensor({feats.frames, feats.dim}, std::vector<double>(span.begin(), span.end()));
}

ChannelEncodings MultiChannelEncoder::encode_channels(const MultiChannelFeatures& feats) const {
  if (feats.channels == 0) throw InputError("encoder: no channels");
  if (feats.frames == 0) throw InputError("encoder: no frames");
  if (feats.dim != cfg_.feature_dim) {
    throw DimensionError("encoder: feature dim " + std::to_string(feats.dim) +
                         ", expected " + std::to_string(cfg_.feature_dim));
  }
  ChannelEncodings x;
  for (std::size_t c = 0; c < feats.channels; ++c) {
    x.push_back(embed_channel(channel_tensor(feats, c)));
  }
  auto mask = build_mask(feats.frames, feats.frames, cfg_.context);
  for (std::size_t l = 0; l < csa_.size(); ++l) {
    for (auto& xc : x) xc = csa_layer(l, xc, mask);
  }
  if (feats.channels > 1) {
    for (std::size_t l = 0; l < cca_.size(); ++l) x = cca_layer(l, x);
  }
  return x;
}

Tensor MultiChannelEncoder::encode(const MultiChannelFeatures& feats) const {
  return fuse(encode_channels(feats));
}

void MultiChannelEncoder::collect(ParameterSet& params, const std::string& prefix) const {
  embed_.collect(params, prefix + ".embed");
  for (std::size_t l = 0; l < csa_.size(); ++l) {
    csa_[l].collect(params, prefix + ".csa" + std::to_string(l));
  }
  for (std::size_t l = 0; l < cca_.size(); ++l) {
    cca_[l].collect(params, prefix + ".cca" + std::to_string(l));
  }
}

}  // namespace mctt
