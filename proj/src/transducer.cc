#include "mctt/transducer.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mctt/errors.h"

namespace mctt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

struct LatticeView {
  std::size_t frames, nodes_u, vocab;
  std::span<const double> lp;

  double at(std::size_t t, std::size_t u, std::size_t v) const {
    return lp[(t * nodes_u + u) * vocab + v];
  }
};

LatticeView check_lattice(const Tensor& log_probs, const TokenSequence& y) {
  if (log_probs.rank() != 3) {
    throw AlignmentError("transducer lattice must be (T, U + 1, V), got " +
                         shape_str(log_probs.shape()));
  }
  const std::size_t frames = log_probs.dim(0), nodes_u = log_probs.dim(1),
                    vocab = log_probs.dim(2);
  if (frames == 0) {
    throw AlignmentError("transducer lattice has no frames; " + std::to_string(y.size()) +
                         " labels cannot be aligned");
  }
  if (nodes_u != y.size() + 1) {
    throw AlignmentError("transducer lattice has " + std::to_string(nodes_u) +
                         " label positions for " + std::to_string(y.size()) + " labels");
  }
  for (std::size_t u = 0; u < y.size(); ++u) {
    if (y[u] <= kBlank || static_cast<std::size_t>(y[u]) >= vocab) {
      throw VocabularyError("label " + std::to_string(y[u]) + " at position " +
                            std::to_string(u) + " outside output range 1.." +
                            std::to_string(vocab - 1));
    }
  }
  LatticeView view{frames, nodes_u, vocab, log_probs.values()};
  for (std::size_t n = 0; n < frames * nodes_u; ++n) {
    auto row = view.lp.subspan(n * vocab, vocab);
    const double hi = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - hi);
    const double lse = hi + std::log(sum);
    if (!(std::abs(lse) <= kNormalizationTolerance)) {
      throw AlignmentError("log_probs at node (" + std::to_string(n / nodes_u) + ", " +
                           std::to_string(n % nodes_u) + ") log-sum-exp to " +
                           std::to_string(lse) + ", not 0");
    }
  }
  return view;
}

}  // namespace

JointNetwork::JointNetwork(std::size_t d_audio, std::size_t d_label, std::size_t d_joint,
                           std::size_t vocab_size, std::mt19937_64& rng)
    : d_audio_(d_audio),
      d_label_(d_label),
      vocab_size_(vocab_size),
      hidden_(d_audio + d_label, d_joint, rng),
      output_(d_joint, vocab_size, rng) {}

void JointNetwork::check_widths(const Tensor& h, const Tensor& g) const {
  if (h.rank() != 2 || g.rank() != 2 || h.dim(1) != d_audio_ || g.dim(1) != d_label_) {
    throw DimensionError("joint: audio " + shape_str(h.shape()) + " and label " +
                         shape_str(g.shape()) + " states, expected widths " +
                         std::to_string(d_audio_) + " and " + std::to_string(d_label_));
  }
}

Tensor JointNetwork::forward(const Tensor& h, const Tensor& g) const {
  check_widths(h, g);
  if (h.dim(0) != g.dim(0)) {
    throw DimensionError("joint: " + std::to_string(h.dim(0)) + " audio rows vs " +
                         std::to_string(g.dim(0)) + " label rows");
  }
  return output_(tanh(hidden_(concat_lastdim({h, g}))));
}

Tensor JointNetwork::lattice(const Tensor& h, const Tensor& g) const {
  check_widths(h, g);
  return output_(tanh(hidden_(pair_concat(h, g))));
}

void JointNetwork::collect(ParameterSet& params, const std::string& prefix) const {
  hidden_.collect(params, prefix + ".hidden");
  output_.collect(params, prefix + ".output");
}

double ForwardBackward::occupancy(std::size_t t, std::size_t u) const {
  const std::size_t i = t * (labels + 1) + u;
  return std::exp(alpha[i] + beta[i] - log_likelihood);
}

ForwardBackward forward_backward(const Tensor& log_probs, const TokenSequence& y,
                                 bool with_grad) {
  const LatticeView lat = check_lattice(log_probs, y);
  const std::size_t T = lat.frames, U = y.size(), W = U + 1;
  auto blank = [&](std::size_t t, std::size_t u) { return lat.at(t, u, kBlank); };
  auto emit = [&](std::size_t t, std::size_t u) {
    return lat.at(t, u, static_cast<std::size_t>(y[u]));
  };

  ForwardBackward fb;
  fb.frames = T;
  fb.labels = U;
  fb.alpha.assign(T * W, kNegInf);
  fb.beta.assign(T * W, kNegInf);
  auto& alpha = fb.alpha;
  auto& beta = fb.beta;

  alpha[0] = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < W; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[(t - 1) * W + u] + blank(t - 1, u);
      if (u > 0) a = logaddexp(a, alpha[t * W + u - 1] + emit(t, u - 1));
      alpha[t * W + u] = a;
    }
  }

  beta[(T - 1) * W + U] = blank(T - 1, U);
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = W; u-- > 0;) {
      if (t == T - 1 && u == U) continue;
      double b = kNegInf;
      if (t + 1 < T) b = beta[(t + 1) * W + u] + blank(t, u);
      if (u < U) b = logaddexp(b, beta[t * W + u + 1] + emit(t, u));
      beta[t * W + u] = b;
    }
  }

  fb.log_likelihood = alpha[(T - 1) * W + U] + blank(T - 1, U);
  if (!std::isfinite(fb.log_likelihood)) {
    throw NumericError("transducer log-likelihood is not finite (" +
                       std::to_string(fb.log_likelihood) + ")");
  }
  if (!with_grad) return fb;

  const double logp = fb.log_likelihood;
  fb.grad.assign(lat.lp.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < W; ++u) {
      const std::size_t node = (t * W + u) * lat.vocab;
      const double a = alpha[t * W + u];
      if (t + 1 < T) {
        fb.grad[node + kBlank] = -std::exp(a + blank(t, u) + beta[(t + 1) * W + u] - logp);
      } else if (u == U) {
        fb.grad[node + kBlank] = -std::exp(a + blank(t, u) - logp);
      }
      if (u < U) {
        fb.grad[node + static_cast<std::size_t>(y[u])] =
            -std::exp(a + emit(t, u) + beta[t * W + u + 1] - logp);
      }
    }
  }
  return fb;
}

Tensor transducer_loss(const Tensor& log_probs, const TokenSequence& y) {
  const bool track = grad_enabled() && log_probs.requires_grad();
  auto fb = forward_backward(log_probs, y, track);
  auto grad = std::make_shared<std::vector<double>>(std::move(fb.grad));
  return make_node({1}, {-fb.log_likelihood}, {log_probs},
                   [grad](const std::vector<double>& out, std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& g = *in[0];
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += out[0] * (*grad)[i];
                   });
}

Tensor transducer_loss_from_logits(const Tensor& logits, const TokenSequence& y) {
  return transducer_loss(log_softmax_lastdim(logits), y);
}

std::uint64_t alignment_count(std::size_t frames, std::size_t labels) {
  if (frames == 0) return 0;
  // C(n, k) with n = T + U - 1, k = U, built incrementally to stay exact.
  const std::uint64_t n = frames + labels - 1;
  std::uint64_t c = 1;
  for (std::uint64_t k = 1; k <= labels; ++k) c = c * (n - labels + k) / k;
  return c;
}

BruteForceResult brute_force_loss(const Tensor& log_probs, const TokenSequence& y) {
  const LatticeView lat = check_lattice(log_probs, y);
  const std::size_t T = lat.frames, U = y.size();
  if (T + U > kBruteForceLimit) {
    throw InputError("brute force enumeration limited to T + U <= " +
                     std::to_string(kBruteForceLimit) + ", got T=" + std::to_string(T) +
                     " U=" + std::to_string(U));
  }
  std::vector<double> path_logs;
  // Depth-first walk over (t, u) with the running path log-probability.
  auto walk = [&](auto&& self, std::size_t t, std::size_t u, double acc) -> void {
    if (t == T - 1 && u == U) {
      path_logs.push_back(acc + lat.at(t, u, kBlank));
      return;
    }
    if (t + 1 < T) self(self, t + 1, u, acc + lat.at(t, u, kBlank));
    if (u < U) self(self, t, u + 1, acc + lat.at(t, u, static_cast<std::size_t>(y[u])));
  };
  walk(walk, 0, 0, 0.0);
  const double hi = *std::max_element(path_logs.begin(), path_logs.end());
  double sum = 0.0;
  for (double v : path_logs) sum += std::exp(v - hi);
  return {-(hi + std::log(sum)), path_logs.size()};
}

TokenId argmax_token(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < logits.size(); ++v) {
    if (v == static_cast<std::size_t>(kSos)) continue;
    if (logits[v] > logits[best]) best = v;
  }
  return static_cast<TokenId>(best);
}

GreedyDecoder::GreedyDecoder(const LabelEncoder& labels, const JointNetwork& joint,
                             DecodeOptions options)
    : labels_(&labels), joint_(&joint), options_(options), state_(labels.start()) {
  if (options_.max_symbols_per_frame == 0) {
    throw ConfigError("greedy decoding needs max_symbols_per_frame >= 1");
  }
}

std::size_t GreedyDecoder::push_frame(const Tensor& h_t) {
  NoGradGuard no_grad;
  std::size_t emitted = 0;
  while (emitted < options_.max_symbols_per_frame) {
    Tensor logits = joint_->forward(h_t, state_.output);
    ++result_.joint_calls;
    const TokenId best = argmax_token(logits.values());
    if (best == kBlank) break;
    result_.tokens.push_back(best);
    result_.emit_frames.push_back(frames_);
    state_ = labels_->step(state_, best);
    ++emitted;
  }
  ++frames_;
  return emitted;
}

DecodeResult greedy_decode(const Tensor& h, const LabelEncoder& labels,
                           const JointNetwork& joint, DecodeOptions options) {
  if (h.rank() != 2) throw DimensionError("greedy decode: encoder states " + shape_str(h.shape()));
  GreedyDecoder decoder(labels, joint, options);
  for (std::size_t t = 0; t < h.dim(0); ++t) decoder.push_frame(slice_rows(h, t, t + 1));
  return decoder.result();
}

}  // namespace mctt
