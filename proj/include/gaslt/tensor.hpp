#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "gaslt/errors.hpp"

namespace gaslt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One node of the reverse-mode tape. Nodes are created by forward ops and
// immutable afterwards except for gradient accumulation.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

bool grad_enabled();

}  // namespace detail

// Disables tape recording for the current thread while alive (evaluation,
// decoding, benchmarking).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense 64-bit float tensor participating in a reverse-mode graph.
// Value-semantic handle over a shared node; copying shares the node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  bool is_scalar() const { return defined() && node_->values.size() == 1 && shape().empty(); }
  // 2-d accessors; throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double item() const;  // scalar value
  const std::vector<double>& values() const;
  // In-place update of a leaf tensor (optimizer steps, buffer loads).
  std::vector<double>& mutable_values();

  bool requires_grad() const { return defined() && node_->requires_grad; }
  bool has_grad() const { return defined() && node_->grad.size() == node_->values.size(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  // Reverse-mode sweep from a scalar loss. Fills grad on every reachable
  // tensor with requires_grad; visits each node exactly once.
  void backward() const;

  // Constructs a tensor recorded on the tape with a custom backward. Used by
  // the primitive ops and by fused kernels (attention, losses).
  static Tensor from_op(Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& parents,
                        std::function<void(detail::Node&)> backward);

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

}  // namespace gaslt
