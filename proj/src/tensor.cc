#include "mctt/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mctt/errors.h"

namespace mctt {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<Tensor> inputs;
  BackwardFn backward;  // empty for leaves
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::values() const { return impl_->data; }

std::span<double> Tensor::mutable_values() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2 || i >= dim(0) || j >= dim(1)) {
    throw DimensionError("at(" + std::to_string(i) + ", " + std::to_string(j) +
                         ") on shape " + shape_str(shape()));
  }
  return impl_->data[i * impl_->shape[1] + j];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() requires a scalar root, got shape " +
                         shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].impl_.get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed from scratch on every pass; leaves keep
  // accumulating.
  for (auto* node : order) {
    if (node->backward) {
      node->grad.assign(node->data.size(), 0.0);
    } else if (node->grad.empty()) {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  impl_->grad[0] += 1.0;

  std::vector<std::vector<double>*> sinks;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->backward) continue;
    sinks.clear();
    for (auto& in : node->inputs) {
      sinks.push_back(in.impl_->requires_grad ? &in.impl_->grad : nullptr);
    }
    node->backward(node->grad, sinks);
  }
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor make_node(Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool track = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    impl->requires_grad = true;
    impl->inputs = std::move(inputs);
    impl->backward = std::move(backward);
  }
  return Tensor(std::move(impl));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void ParameterSet::add(std::string name, Tensor t) {
  for (const auto& item : items_) {
    if (item.name == name) throw InputError("duplicate parameter " + name);
  }
  t.set_requires_grad(true);
  items_.push_back({std::move(name), std::move(t)});
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.numel();
  return n;
}

const Tensor& ParameterSet::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return item.tensor;
  }
  throw InputError("no parameter named " + name);
}

// Allocates as well as clears, so parameters untouched by a given batch (the
// cross-channel layers of a one-channel run, say) still step with zero grad.
void ParameterSet::zero_grads() const {
  for (auto item : items_) {
    auto g = item.tensor.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(v));
}

}  // namespace mctt
