#pragma once

#include <random>
#include <span>
#include <vector>

#include "gaslt/tensor.hpp"

namespace gaslt::ops {

// Matrix product (m x k)(k x n) -> (m x n).
Tensor matmul(const Tensor& a, const Tensor& b);

// Affine map x(m x k) * w(n x k)^T + b(n) -> (m x n). Pass an undefined
// bias for a pure projection.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);

// Row-wise softmax over the last dimension, max-subtracted for stability.
Tensor softmax_last_dim(const Tensor& a);

// Per-row normalization over the last dimension: (x - mean) / sqrt(var + eps)
// then gain/bias over that dimension. Population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);

// Mutable running statistics of one batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  explicit BatchNormState(std::size_t dim = 0)
      : running_mean(dim, 0.0), running_var(dim, 1.0) {}
};

// Per-column normalization of x (rows x dim) over the batch of rows.
// Training mode uses batch statistics (rows >= 2 required) and updates the
// running state; eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum = 0.1,
                  double eps = 1e-5);

// Inverted dropout: keeps with probability 1-p and scales by 1/(1-p) in
// training mode; identity in eval mode.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64* rng);

Tensor mean_rows(const Tensor& x);  // (m x n) -> (n)
Tensor max_rows(const Tensor& x);   // (m x n) -> (n), grads to first argmax
Tensor mean_all(const Tensor& x);   // -> scalar
Tensor sum_all(const Tensor& x);    // -> scalar

// cos(a, b) for two vectors of equal length; errors on zero norm.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// Rows of table (vocab x dim) gathered by id -> (ids.size() x dim).
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& x);

}  // namespace gaslt::ops
