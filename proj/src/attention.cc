#include "mctt/attention.h"

#include <charconv>
#include <cmath>
#include <numeric>

#include "mctt/errors.h"

namespace mctt {

ContextBound parse_context_bound(std::string_view text) {
  if (text == "inf" || text == "INF" || text == "-1") return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError("context bound must be a non-negative integer or 'inf', got '" +
                     std::string(text) + "'");
  }
  return value;
}

std::string context_bound_str(ContextBound bound) {
  return bound ? std::to_string(*bound) : "inf";
}

ContextMask::ContextMask(std::size_t queries, std::size_t keys,
                         std::vector<std::uint8_t> allow, ContextWindow window)
    : queries_(queries), keys_(keys), allow_(std::move(allow)), window_(window) {
  if (allow_.size() != queries_ * keys_) {
    throw DimensionError("context mask: " + std::to_string(allow_.size()) +
                         " entries for " + std::to_string(queries_) + "x" +
                         std::to_string(keys_));
  }
}

ContextMask build_mask(std::span<const std::size_t> query_times,
                       std::span<const std::size_t> key_times,
                       ContextWindow window) {
  const std::size_t nq = query_times.size(), nk = key_times.size();
  std::vector<std::uint8_t> allow(nq * nk, 0);
  for (std::size_t q = 0; q < nq; ++q) {
    const auto t = static_cast<long long>(query_times[q]);
    bool any = false;
    for (std::size_t k = 0; k < nk; ++k) {
      const auto s = static_cast<long long>(key_times[k]);
      const bool left_ok = !window.left || s >= t - static_cast<long long>(*window.left);
      const bool right_ok = !window.right || s <= t + static_cast<long long>(*window.right);
      allow[q * nk + k] = left_ok && right_ok;
      any = any || (left_ok && right_ok);
    }
    if (!any) {
      throw MaskError("context mask: query " + std::to_string(q) +
                      " has no admissible key among " + std::to_string(nk));
    }
  }
  return ContextMask(nq, nk, std::move(allow), window);
}

ContextMask build_mask(std::size_t queries, std::size_t keys, ContextWindow window) {
  std::vector<std::size_t> qt(queries), kt(keys);
  std::iota(qt.begin(), qt.end(), 0);
  std::iota(kt.begin(), kt.end(), 0);
  return build_mask(qt, kt, window);
}

Tensor positional_encoding(std::size_t frames, std::size_t d_model, std::size_t offset) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw InputError("positional encoding needs an even d_model, got " +
                     std::to_string(d_model));
  }
  std::vector<double> pe(frames * d_model);
  for (std::size_t t = 0; t < frames; ++t) {
    const double pos = static_cast<double>(t + offset);
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[t * d_model + 2 * i] = std::sin(angle);
      pe[t * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({frames, d_model}, std::move(pe));
}

void MhaConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_ff == 0) {
    throw ConfigError("attention: d_model, n_heads and d_ff must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) +
                      " is not divisible by " + std::to_string(n_heads) + " heads");
  }
}

AttentionBlock::AttentionBlock(const MhaConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model;
  query_ = Linear(d, d, rng);
  key_ = Linear(d, d, rng);
  value_ = Linear(d, d, rng);
  output_ = Linear(d, d, rng);
  attn_norm_ = LayerNormParams(d);
  ff_in_ = Linear(d, cfg_.d_ff, rng);
  ff_out_ = Linear(cfg_.d_ff, d, rng);
  ff_norm_ = LayerNormParams(d);
}

KeyValue AttentionBlock::project(const Tensor& kv_in) const {
  if (kv_in.rank() != 2 || kv_in.dim(1) != cfg_.d_model) {
    throw DimensionError("attention: key/value input " + shape_str(kv_in.shape()) +
                         " does not have width " + std::to_string(cfg_.d_model));
  }
  return {key_(kv_in), value_(kv_in)};
}

std::vector<Tensor> AttentionBlock::head_weights(const Tensor& q, const Tensor& keys,
                                                 const ContextMask* mask) const {
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (mask && (mask->queries() != q.dim(0) || mask->keys() != keys.dim(0))) {
    throw DimensionError("attention: mask " + std::to_string(mask->queries()) + "x" +
                         std::to_string(mask->keys()) + " for " +
                         std::to_string(q.dim(0)) + " queries and " +
                         std::to_string(keys.dim(0)) + " keys");
  }
  std::vector<Tensor> weights;
  weights.reserve(cfg_.n_heads);
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice_lastdim(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_lastdim(keys, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask) scores = masked_fill(scores, mask->data(), kMaskedScore);
    weights.push_back(softmax_lastdim(scores));
  }
  return weights;
}

Tensor AttentionBlock::attend(const Tensor& q_in, const KeyValue& kv,
                              const ContextMask* mask) const {
  if (q_in.rank() != 2 || q_in.dim(1) != cfg_.d_model) {
    throw DimensionError("attention: query input " + shape_str(q_in.shape()) +
                         " does not have width " + std::to_string(cfg_.d_model));
  }
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  Tensor q = query_(q_in);
  auto weights = head_weights(q, kv.keys, mask);
  std::vector<Tensor> heads;
  heads.reserve(cfg_.n_heads);
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    heads.push_back(matmul(weights[h], slice_lastdim(kv.values, h * dh, (h + 1) * dh)));
  }
  Tensor attended = output_(cfg_.n_heads == 1 ? heads[0] : concat_lastdim(heads));
  Tensor x = attn_norm_(add(q_in, attended));
  Tensor ff = ff_out_(relu(ff_in_(x)));
  return ff_norm_(add(x, ff));
}

Tensor AttentionBlock::forward(const Tensor& q_in, const Tensor& kv_in,
                               const ContextMask& mask) const {
  return attend(q_in, project(kv_in), &mask);
}

Tensor AttentionBlock::attention_weights(const Tensor& q_in, const Tensor& kv_in,
                                         const ContextMask* mask) const {
  return stack(head_weights(query_(q_in), project(kv_in).keys, mask));
}

void AttentionBlock::collect(ParameterSet& params, const std::string& prefix) const {
  query_.collect(params, prefix + ".query");
  key_.collect(params, prefix + ".key");
  value_.collect(params, prefix + ".value");
  output_.collect(params, prefix + ".output");
  attn_norm_.collect(params, prefix + ".attn_norm");
  ff_in_.collect(params, prefix + ".ff_in");
  ff_out_.collect(params, prefix + ".ff_out");
  ff_norm_.collect(params, prefix + ".ff_norm");
}

}  // namespace mctt
