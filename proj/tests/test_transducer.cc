#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "mctt/errors.h"
#include "mctt/transducer.h"
#include "test_util.h"

using namespace mctt;
using mctt::testing::check_gradients;
using mctt::testing::random_tensor;

namespace {

Tensor random_log_probs(std::size_t t, std::size_t u1, std::size_t v, std::mt19937_64& rng,
                        double spread = 3.0) {
  NoGradGuard no_grad;
  return log_softmax_lastdim(random_tensor({t, u1, v}, rng, -spread, spread)).detach();
}

TokenSequence random_labels(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<TokenId> d(1, static_cast<TokenId>(vocab) - 1);
  TokenSequence y(n);
  for (auto& v : y) v = d(rng);
  return y;
}

// Independent oracle: walk every bit pattern of length T + U with exactly U
// label bits, keep those ending in a blank, and sum path probabilities.
struct Enumerated {
  double loss;
  std::size_t paths;
};

Enumerated enumerate_paths(const Tensor& lp, const TokenSequence& y) {
  const std::size_t T = lp.dim(0), U = y.size(), V = lp.dim(2), W = U + 1;
  const std::size_t n = T + U;
  double total = 0.0;
  std::size_t paths = 0;
  for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
    if (static_cast<std::size_t>(std::popcount(bits)) != U) continue;
    if (bits & (1u << (n - 1))) continue;  // last symbol must be blank
    std::size_t t = 0, u = 0;
    double logp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double* node = lp.values().data() + (t * W + u) * V;
      if (bits & (1u << k)) {
        logp += node[y[u]];
        ++u;
      } else {
        logp += node[kBlank];
        ++t;
      }
    }
    total += std::exp(logp);
    ++paths;
  }
  return {-std::log(total), paths};
}

std::uint64_t pascal(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::uint64_t>> c(n + 1, std::vector<std::uint64_t>(n + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) {
    c[i][0] = 1;
    for (std::size_t j = 1; j <= i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
  }
  return c[n][k];
}

LabelEncoderConfig toy_labels(std::size_t vocab) {
  LabelEncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.mha = {8, 2, 16};
  cfg.n_layers = 1;
  return cfg;
}

}  // namespace

TEST_CASE("joint: zero weights give the output bias; shape includes blank") {
  std::mt19937_64 rng(1);
  JointNetwork joint(8, 8, 6, 5, rng);
  Tensor w1 = joint.hidden().weight, w2 = joint.output().weight;
  std::fill(w1.mutable_values().begin(), w1.mutable_values().end(), 0.0);
  std::fill(w2.mutable_values().begin(), w2.mutable_values().end(), 0.0);
  Tensor b2 = joint.output().bias;
  auto out = joint.forward(random_tensor({1, 8}, rng), random_tensor({1, 8}, rng));
  CHECK(out.shape() == Shape{1, 5});
  auto p = softmax_lastdim(out);
  for (double v : p.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  b2.mutable_values()[3] = 1.5;
  out = joint.forward(random_tensor({1, 8}, rng), random_tensor({1, 8}, rng));
  CHECK(out.values()[3] == 1.5);
  CHECK(out.values()[0] == 0.0);
  CHECK_THROWS_AS(joint.forward(random_tensor({1, 7}, rng), random_tensor({1, 8}, rng)),
                  DimensionError);
}

TEST_CASE("joint: lattice rows equal single-pair evaluations exactly") {
  std::mt19937_64 rng(2);
  JointNetwork joint(8, 6, 10, 5, rng);
  Tensor h = random_tensor({4, 8}, rng), g = random_tensor({3, 6}, rng);
  Tensor lat = joint.lattice(h, g);
  CHECK(lat.shape() == Shape{4, 3, 5});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t u = 0; u < 3; ++u) {
      auto one = joint.forward(slice_rows(h, t, t + 1), slice_rows(g, u, u + 1));
      for (std::size_t v = 0; v < 5; ++v) {
        CHECK(one.values()[v] == lat.values()[(t * 3 + u) * 5 + v]);
      }
    }
  }
}

TEST_CASE("joint: gradients match finite differences") {
  std::mt19937_64 rng(3);
  JointNetwork joint(4, 4, 6, 5, rng);
  ParameterSet params;
  joint.collect(params, "joint");
  Tensor h = random_tensor({3, 4}, rng), g = random_tensor({2, 4}, rng);
  std::vector<Tensor> leaves{h, g};
  for (const auto& p : params.items()) leaves.push_back(p.tensor);
  TokenSequence y{2};
  auto r = check_gradients(leaves, [&] {
    return transducer_loss_from_logits(joint.lattice(h, g), y);
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("transducer loss: single frame, no labels is the blank log-prob") {
  std::mt19937_64 rng(4);
  Tensor lp = random_log_probs(1, 1, 4, rng);
  auto loss = transducer_loss(lp, {});
  CHECK(loss.item() == -lp.values()[0]);
  auto bf = brute_force_loss(lp, {});
  CHECK(bf.paths == 1);
  CHECK(bf.loss == doctest::Approx(-lp.values()[0]).epsilon(1e-14));
}

TEST_CASE("transducer loss: T=2, U=1 sums the two lattice paths") {
  std::mt19937_64 rng(5);
  Tensor lp = random_log_probs(2, 2, 3, rng);
  const TokenSequence y{2};
  auto at = [&](std::size_t t, std::size_t u, std::size_t v) {
    return lp.values()[(t * 2 + u) * 3 + v];
  };
  // label, blank, blank  and  blank, label, blank
  const double p1 = std::exp(at(0, 0, 2) + at(0, 1, 0) + at(1, 1, 0));
  const double p2 = std::exp(at(0, 0, 0) + at(1, 0, 2) + at(1, 1, 0));
  const double expected = -std::log(p1 + p2);
  CHECK(std::abs(transducer_loss(lp, y).item() - expected) < 1e-12);
  CHECK(brute_force_loss(lp, y).paths == 2);

  // Uniform log-probs over blank + one label: two paths of probability 1/8.
  Tensor uniform = Tensor::full({2, 2, 2}, -std::log(2.0));
  CHECK(std::abs(transducer_loss(uniform, {1}).item() - 2.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("transducer loss equals brute-force enumeration on random lattices") {
  std::mt19937_64 rng(6);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 4, U = rng() % 4, V = 2 + rng() % 3;
    Tensor lp = random_log_probs(T, U + 1, V, rng);
    auto y = random_labels(U, V, rng);
    const double fb = transducer_loss(lp, y).item();
    const auto bf = brute_force_loss(lp, y);
    const auto en = enumerate_paths(lp, y);
    worst = std::max({worst, std::abs(fb - bf.loss), std::abs(fb - en.loss)});
    CHECK(bf.paths == en.paths);
    CHECK(bf.paths == alignment_count(T, U));
    CHECK(bf.paths == pascal(T + U - 1, U));
  }
  CHECK(worst < 1e-10);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::minutes(1));
}

TEST_CASE("transducer loss: gradient w.r.t. logits matches finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t T = 2 + trial % 3, U = 1 + trial % 3, V = 4;
    Tensor logits = random_tensor({T, U + 1, V}, rng, -2, 2);
    auto y = random_labels(U, V, rng);
    auto r = check_gradients({logits}, [&] { return transducer_loss_from_logits(logits, y); });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("transducer loss: occupancy along anti-diagonals sums to one") {
  std::mt19937_64 rng(8);
  const std::size_t T = 5, U = 3, V = 4;
  Tensor lp = random_log_probs(T, U + 1, V, rng);
  auto y = random_labels(U, V, rng);
  auto fb = forward_backward(lp, y, true);
  std::vector<double> diag(T + U, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      const double occ = fb.occupancy(t, u);
      diag[t + u] += occ;
      double g = 0.0;
      for (std::size_t v = 0; v < V; ++v) g += fb.grad[(t * (U + 1) + u) * V + v];
      CHECK(std::abs(g + occ) < 1e-12);
      CHECK(std::isfinite(fb.alpha[t * (U + 1) + u]));
      CHECK(std::isfinite(fb.beta[t * (U + 1) + u]));
    }
  }
  for (double d : diag) CHECK(std::abs(d - 1.0) < 1e-12);
}

TEST_CASE("transducer loss: batch mean is invariant to utterance order") {
  std::mt19937_64 rng(9);
  std::vector<Tensor> lps;
  std::vector<TokenSequence> ys;
  for (int i = 0; i < 6; ++i) {
    const std::size_t T = 2 + rng() % 4, U = rng() % 3;
    lps.push_back(random_log_probs(T, U + 1, 4, rng));
    ys.push_back(random_labels(U, 4, rng));
  }
  auto batch = [&](const std::vector<std::size_t>& order) {
    double s = 0.0;
    for (auto i : order) s += transducer_loss(lps[i], ys[i]).item();
    return s / static_cast<double>(order.size());
  };
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), 0);
  const double a = batch(order);
  std::reverse(order.begin(), order.end());
  CHECK(std::abs(a - batch(order)) < 1e-12);
}

TEST_CASE("transducer loss: malformed lattices are rejected") {
  std::mt19937_64 rng(10);
  CHECK_THROWS_AS(transducer_loss(Tensor::zeros({0, 2, 3}), {1}), AlignmentError);
  CHECK_THROWS_AS(transducer_loss(random_tensor({2, 2, 3}, rng), {1}), AlignmentError);
  CHECK_THROWS_AS(transducer_loss(random_log_probs(2, 3, 3, rng), {1}), AlignmentError);
  CHECK_THROWS_AS(transducer_loss(random_log_probs(2, 2, 3, rng), {kBlank}), VocabularyError);
  CHECK_THROWS_AS(brute_force_loss(random_log_probs(8, 6, 3, rng), {1, 1, 1, 1, 1}),
                  InputError);
}

TEST_CASE("argmax: ties go to the lowest id and sos is never chosen") {
  std::vector<double> a{0.5, 0.5, 0.1};
  CHECK(argmax_token(a) == 0);
  std::vector<double> b{0.1, 9.0, 0.2, 0.2};
  CHECK(argmax_token(b) == 2);
}

TEST_CASE("greedy decode: blank-biased joint emits nothing after T joint calls") {
  std::mt19937_64 rng(11);
  LabelEncoder labels(toy_labels(6), rng);
  JointNetwork joint(8, 8, 8, 6, rng);
  Tensor b2 = joint.output().bias;
  b2.mutable_values()[0] = 1e3;
  Tensor h = random_tensor({7, 8}, rng);
  auto r = greedy_decode(h, labels, joint);
  CHECK(r.tokens.empty());
  CHECK(r.joint_calls == 7);
}

TEST_CASE("greedy decode: symbol cap bounds emissions per frame") {
  std::mt19937_64 rng(12);
  LabelEncoder labels(toy_labels(6), rng);
  JointNetwork joint(8, 8, 8, 6, rng);
  Tensor b2 = joint.output().bias;
  b2.mutable_values()[4] = 1e3;
  Tensor h = random_tensor({3, 8}, rng);
  auto r = greedy_decode(h, labels, joint, {2});
  CHECK(r.tokens == TokenSequence(6, 4));
  CHECK(r.joint_calls == 6);
  CHECK(r.emit_frames == std::vector<std::size_t>{0, 0, 1, 1, 2, 2});
  CHECK_THROWS_AS(greedy_decode(h, labels, joint, {0}), ConfigError);
}

TEST_CASE("greedy decode: frame-by-frame feeding equals whole-sequence decode") {
  std::mt19937_64 rng(13);
  LabelEncoder labels(toy_labels(6), rng);
  JointNetwork joint(8, 8, 8, 6, rng);
  Tensor h = random_tensor({12, 8}, rng, -3, 3);
  auto whole = greedy_decode(h, labels, joint);
  GreedyDecoder dec(labels, joint);
  for (std::size_t t = 0; t < 12; ++t) dec.push_frame(slice_rows(h, t, t + 1));
  CHECK(dec.result().tokens == whole.tokens);
  CHECK(dec.result().joint_calls == whole.joint_calls);
}
