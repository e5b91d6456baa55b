#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mctt/adam.h"
#include "mctt/errors.h"
#include "mctt/tensor.h"
#include "test_util.h"

using namespace mctt;
using mctt::testing::check_gradients;
using mctt::testing::random_tensor;

TEST_CASE("matmul: identity and hand arithmetic") {
  std::mt19937_64 rng(1);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = random_tensor({3, 4}, rng);
  Tensor y = matmul(eye, x);
  CHECK(y.shape() == Shape{3, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.values()[0] == 3.0);
  CHECK(c.values()[1] == 7.0);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(4, 2)") != std::string::npos);
  }
}

TEST_CASE("matmul: gradient matches finite differences") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 2}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  auto r = check_gradients({a, b}, [&] { return sum_all(mul(matmul(a, b), w)); });
  CHECK(r.max_rel_error < 1e-4);

  // Batched and shared-right-operand forms.
  Tensor a3 = random_tensor({2, 3, 4}, rng);
  Tensor b3 = random_tensor({2, 4, 2}, rng);
  Tensor w3 = random_tensor({2, 3, 2}, rng);
  r = check_gradients({a3, b3}, [&] { return sum_all(mul(matmul(a3, b3), w3)); });
  CHECK(r.max_rel_error < 1e-4);
  Tensor b2 = random_tensor({4, 2}, rng);
  r = check_gradients({a3, b2}, [&] { return sum_all(mul(matmul(a3, b2), w3)); });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("softmax_lastdim") {
  Tensor z({3}, {0, 0, 0});
  auto s = softmax_lastdim(z);
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::mt19937_64 rng(3);
  Tensor x = random_tensor({4, 7}, rng, -5, 5);
  auto base = softmax_lastdim(x);
  auto shifted = softmax_lastdim(add(x, Tensor::scalar(123.25)));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(base.values()[i] - shifted.values()[i]) < 1e-6);
  }
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 7; ++j) sum += base.values()[r * 7 + j];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  // Direct evaluation: e^k / (e + e^2 + e^3).
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double denom = e1 + e2 + e3;
  auto s3 = softmax_lastdim(Tensor({3}, {1, 2, 3}));
  CHECK(std::abs(s3.values()[0] - e1 / denom) < 1e-9);
  CHECK(std::abs(s3.values()[1] - e2 / denom) < 1e-9);
  CHECK(std::abs(s3.values()[2] - e3 / denom) < 1e-9);

  CHECK_THROWS_AS(softmax_lastdim(Tensor({2}, {0.0, std::nan("")})), NumericError);
}

TEST_CASE("layer_norm") {
  Tensor x({3}, {1, 2, 3});
  Tensor one = Tensor::full({3}, 1.0), zero = Tensor::zeros({3});
  auto y = layer_norm(x, one, zero);
  double mean = 0.0, var = 0.0;
  for (double v : y.values()) mean += v;
  mean /= 3.0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= 3.0;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-4);

  Tensor bias({3}, {0.5, -1.0, 2.0});
  auto z = layer_norm(x, Tensor::zeros({3}), bias);
  for (std::size_t i = 0; i < 3; ++i) CHECK(z.values()[i] == bias.values()[i]);

  // Constant row with eps = 0 still gets the eps guard.
  auto c = layer_norm(Tensor({4}, {2, 2, 2, 2}), Tensor::full({4}, 1.0),
                      Tensor::zeros({4}), 0.0);
  for (double v : c.values()) CHECK(std::isfinite(v));

  std::mt19937_64 rng(4);
  Tensor xr = random_tensor({2, 6}, rng);
  Tensor g = random_tensor({6}, rng, 0.5, 1.5);
  Tensor b = random_tensor({6}, rng);
  Tensor w = random_tensor({2, 6}, rng);
  auto r = check_gradients({xr, g, b}, [&] { return sum_all(mul(layer_norm(xr, g, b), w)); });
  CHECK(r.max_rel_error < 1e-4);

  CHECK_THROWS_AS(layer_norm(xr, Tensor::zeros({5}), b), DimensionError);
}

TEST_CASE("elementwise operations") {
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  auto cat = concat_lastdim({Tensor::zeros({2, 3}), Tensor::zeros({2, 5})});
  CHECK(cat.shape() == Shape{2, 8});
  CHECK_THROWS_AS(concat_lastdim({Tensor::zeros({2, 3}), Tensor::zeros({3, 5})}),
                  DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);

  std::mt19937_64 rng(5);
  Tensor x = random_tensor({5, 9}, rng, -4, 4);
  auto ls = log_softmax_lastdim(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 9; ++j) sum += std::exp(ls.values()[r * 9 + j]);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor v = random_tensor({4}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor w8 = random_tensor({3, 8}, rng);
  Tensor table = random_tensor({5, 4}, rng);
  Tensor g = random_tensor({2, 3}, rng);
  Tensor w44 = random_tensor({4, 4}, rng);

  struct Case {
    const char* name;
    std::vector<Tensor> leaves;
    std::function<Tensor()> f;
  };
  std::vector<std::int32_t> ids = {3, 0, 3, 1};
  std::vector<std::uint8_t> allow = {1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1};
  std::vector<Case> cases = {
      {"add", {a, v}, [&] { return sum_all(mul(add(a, v), w)); }},
      {"sub", {a, b}, [&] { return sum_all(mul(sub(a, b), w)); }},
      {"mul", {a, v}, [&] { return sum_all(mul(mul(a, v), w)); }},
      {"scale", {a}, [&] { return sum_all(mul(scale(a, -2.5), w)); }},
      {"tanh", {a}, [&] { return sum_all(mul(tanh(a), w)); }},
      {"relu", {a}, [&] { return sum_all(mul(relu(add(a, Tensor::scalar(0.013))), w)); }},
      {"softmax", {a}, [&] { return sum_all(mul(softmax_lastdim(a), w)); }},
      {"log_softmax", {a}, [&] { return sum_all(mul(log_softmax_lastdim(a), w)); }},
      {"transpose", {a}, [&] { return sum_all(mul(transpose(transpose(a)), w)); }},
      {"concat", {a, b}, [&] { return sum_all(mul(concat_lastdim({a, b}), w8)); }},
      {"concat_rows", {a, b}, [&] { return sum_all(mul(concat_rows({a, b}), concat_rows({w, b}))); }},
      {"stack_mean", {a, b}, [&] { return sum_all(mul(mean_axis(stack({a, b, a}), 0), w)); }},
      {"mean_axis1", {a}, [&] { return sum_all(mul(mean_axis(a, 1), Tensor({3}, {1, -2, 3}))); }},
      {"slice", {a}, [&] { return sum_all(mul(slice_lastdim(a, 1, 3), slice_lastdim(w, 0, 2))); }},
      {"slice_rows", {a}, [&] { return sum_all(mul(slice_rows(a, 1, 3), slice_rows(w, 0, 2))); }},
      {"masked_fill", {a}, [&] { return sum_all(mul(masked_fill(a, allow, -7.0), w)); }},
      {"embedding", {table}, [&] { return sum_all(mul(embedding(table, ids), w44)); }},
      {"pair_concat", {a, g}, [&] { return sum_all(tanh(pair_concat(a, g))); }},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    auto r = check_gradients(c.leaves, c.f);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("diamond graph sums both path gradients") {
  Tensor x = Tensor::scalar(1.5, true);
  Tensor y = mul(x, Tensor::scalar(3.0));
  Tensor z = add(mul(y, y), tanh(y));  // y consumed twice
  z.backward();
  const double yv = 4.5;
  const double expected = 3.0 * (2.0 * yv + (1.0 - std::tanh(yv) * std::tanh(yv)));
  CHECK(x.grad()[0] == doctest::Approx(expected).epsilon(1e-12));

  // Leaves accumulate until zeroed.
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0 * expected).epsilon(1e-12));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor x = Tensor::scalar(2.0, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("adam: zero gradient leaves parameter unchanged") {
  ParameterSet ps;
  Tensor w({2}, {0.3, -0.7});
  ps.add("w", w);
  w.mutable_grad()[0] = 1.0;
  Adam adam(ps, {});
  adam.step();
  w.zero_grad();
  const double before0 = w.values()[0], before1 = w.values()[1];
  const double m_before = adam.state().m[0][0];
  adam.step();
  CHECK(w.values()[1] == before1);
  CHECK(std::abs(adam.state().m[0][0]) < std::abs(m_before));
  CHECK(adam.state().step == 2);
  // Parameter 0 still moves because its first moment is nonzero.
  CHECK(w.values()[0] != before0);

  ParameterSet fresh;
  Tensor u({1}, {0.25});
  fresh.add("u", u);
  u.mutable_grad();
  Adam adam2(fresh, {});
  adam2.step();
  CHECK(u.values()[0] == 0.25);
}

TEST_CASE("adam: single step matches closed form") {
  ParameterSet ps;
  Tensor w = Tensor::scalar(1.0);
  ps.add("w", w);
  AdamOptions opt;
  opt.lr = 0.1;
  Adam adam(ps, opt);
  mul(w, w).backward();  // d/dw w^2 = 2
  adam.step();
  const double g = 2.0;
  const double m = (1 - opt.beta1) * g, v = (1 - opt.beta2) * g * g;
  const double m_hat = m / (1 - opt.beta1), v_hat = v / (1 - opt.beta2);
  const double expected = 1.0 - opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  CHECK(std::abs(w.item() - expected) < 1e-9);
  CHECK(adam.state().step == 1);
  CHECK(w.grad()[0] == 2.0);  // grads left intact
}

TEST_CASE("adam: convex descent on w^2") {
  ParameterSet ps;
  Tensor w = Tensor::scalar(1.0);
  ps.add("w", w);
  AdamOptions opt;
  opt.lr = 0.005;
  Adam adam(ps, opt);
  double prev = 1.0;
  for (int step = 0; step < 100; ++step) {
    ps.zero_grads();
    mul(w, w).backward();
    adam.step();
    if (step >= 2) CHECK(std::abs(w.item()) < prev);
    prev = std::abs(w.item());
  }
  CHECK(prev < 1.0);
}

TEST_CASE("adam: missing gradient names the parameter") {
  ParameterSet ps;
  ps.add("encoder.layer0.wq", Tensor::zeros({2, 2}));
  Adam adam(ps, {});
  try {
    adam.step();
    FAIL("expected StateError");
  } catch (const StateError& e) {
    CHECK(std::string(e.what()).find("encoder.layer0.wq") != std::string::npos);
  }
}
