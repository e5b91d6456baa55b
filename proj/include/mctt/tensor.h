#pragma once

// Dense row-major double tensors with tape-free reverse-mode differentiation.
//
// Every operation that consumes a tensor with requires_grad() set records a
// node holding its inputs and a backward closure. Tensor::backward() on a
// scalar root replays those closures in reverse topological order. Leaf
// gradients accumulate across backward calls until zero_grad() is called.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mctt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view of the values. Only meaningful on leaves; mutating an
  // intermediate does not invalidate recorded backward closures.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Runs reverse-mode differentiation from this scalar.
  void backward() const;

  // Copy of the values with no graph attached.
  Tensor detach() const;

  // Identity of the underlying storage (two handles may share it).
  const void* id() const { return impl_.get(); }

 private:
  friend Tensor make_node(Shape, std::vector<double>, std::vector<Tensor>,
                          std::function<void(const std::vector<double>&,
                                             std::span<std::vector<double>*>)>);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Backward closure: receives the output gradient and one destination per
// input (nullptr when that input does not need a gradient). Destinations are
// pre-sized and must be accumulated into, never overwritten.
using BackwardFn = std::function<void(const std::vector<double>& out_grad,
                                      std::span<std::vector<double>*> in_grads)>;

// Creates an op result. Records a graph node when gradient mode is on and at
// least one input requires a gradient; otherwise returns a plain constant.
Tensor make_node(Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward);

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations -----------------------------------------------------------

// (..., m, k) x (k, n) or (B, m, k) x (B, k, n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // rank 2 only

// Elementwise with trailing broadcast: b's shape must equal a's shape, a
// suffix of it, or be a single element. Result has a's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);

inline constexpr double kDefaultLayerNormEps = 1e-5;
// Normalizes over the last axis. A non-positive eps falls back to the default
// so that constant rows stay finite.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kDefaultLayerNormEps);

Tensor concat_lastdim(const std::vector<Tensor>& parts);
// Concatenation along axis 0; trailing dimensions must agree.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor stack(const std::vector<Tensor>& parts);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);

Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

// Replaces entries where allow[i] == 0 with value; gradient is zero there.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> allow,
                   double value);

// Row lookup: table is (n, d), result is (ids.size(), d).
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

// (T, a) and (U, b) -> (T, U, a + b) with out[t][u] = [left[t]; right[u]].
Tensor pair_concat(const Tensor& left, const Tensor& right);

// ---- parameters -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered parameter registry. Order is stable and defines checkpoint layout.
class ParameterSet {
 public:
  void add(std::string name, Tensor t);
  const std::vector<NamedTensor>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const;
  const Tensor& find(const std::string& name) const;
  void zero_grads() const;

 private:
  std::vector<NamedTensor> items_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)), shape (fan_in, fan_out).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

}  // namespace mctt
