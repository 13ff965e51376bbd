#include "gaslt/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace gaslt {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_enabled()) {
  detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " wants " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!defined()) throw ContractError("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::size() const { return defined() ? node_->values.size() : 0; }

std::size_t Tensor::rows() const {
  if (shape().size() != 2) {
    throw ShapeError("tensor: rows() on rank-" + std::to_string(shape().size()) +
                     " tensor " + shape_string(shape()));
  }
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (shape().size() != 2) {
    throw ShapeError("tensor: cols() on rank-" + std::to_string(shape().size()) +
                     " tensor " + shape_string(shape()));
  }
  return node_->shape[1];
}

double Tensor::item() const {
  if (!defined() || node_->values.size() != 1) {
    throw ContractError("tensor: item() requires a single-element tensor");
  }
  return node_->values[0];
}

const std::vector<double>& Tensor::values() const {
  if (!defined()) throw ContractError("tensor: undefined");
  return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
  if (!defined()) throw ContractError("tensor: undefined");
  return node_->values;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor: grad not populated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (defined()) node_->grad.assign(node_->values.size(), 0.0);
}

void Tensor::backward() const {
  if (!defined()) throw ContractError("backward: undefined tensor");
  if (node_->values.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(node_->shape));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; each node appended once after its parents.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       const std::vector<Tensor>& parents,
                       std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values), false);
  bool any_grad = false;
  for (const auto& p : parents) any_grad = any_grad || p.requires_grad();
  if (any_grad && detail::grad_enabled()) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const auto& p : parents) out.node_->parents.push_back(p.node());
    out.node_->backward_fn = std::move(backward);
  }
  return out;
}

}  // namespace gaslt
